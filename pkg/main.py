# -------------------- IMPORTS --------------------
import sys
import logging
from pathlib import Path

import click
import colorama

import config
from exceptions import LabError
from grid_state import energy_norm_sq, save_state
from params import derive_constants
from radiation import default_eta_grid, extract_radiation, invert_radiation, linear_params, load_profile, save_profile
from scenarios import build_grid, load_scenario, materialize, parse_axis, run, simulate, sweep
from schemas import NONLINEAR_ONLY, Scenario
from utils.plots import emit_plots
from utils.io import write_json

logger = logging.getLogger(__name__)

colorama.just_fix_windows_console()


# -------------------- HELPERS --------------------
def fail(exc: LabError):
    logger.debug("command failed", exc_info=exc)
    click.secho(f"error: {exc.detail}", fg="red", err=True)
    sys.exit(exc.exit_code)


def require_scenario(ctx) -> Scenario:
    path = ctx.obj["scenario"]
    if path is None:
        raise click.UsageError("--scenario PATH is required for this command")
    scenario = load_scenario(path)
    if ctx.obj["seed"] is not None:
        scenario = scenario.model_copy(update={"seed": ctx.obj["seed"]})
    return scenario


def output_dir(ctx, scenario: Scenario | None = None) -> Path:
    if ctx.obj["out"]:
        return Path(ctx.obj["out"])
    if scenario is not None and scenario.output_dir:
        return Path(scenario.output_dir)
    name = scenario.name if scenario is not None else "artifacts"
    return Path(config.DEFAULT_OUT) / name


def show_verdicts(verdicts) -> None:
    for v in verdicts:
        mark = click.style("PASS", fg="green") if v.passed else click.style("FAIL", fg="red")
        detail = f"  ({v.detail})" if v.detail else ""
        click.echo(f"  {mark}  {v.name:<28} value={v.value:.6g}  bound={v.bound:.6g}{detail}")


def full_suite(scenario: Scenario) -> Scenario:
    """The scenario with every diagnostic its setup supports switched on."""
    requests = {"energy", "flux", "cone", "pointwise", "radiation"}
    if scenario.params.zeta == -1:
        requests |= NONLINEAR_ONLY - {"interior_decay"}
    else:
        requests.add("hardy")
    if scenario.evolution.both_directions:
        requests.add("energy_distribution")
    requests |= set(scenario.diagnostics.requests)
    diagnostics = scenario.diagnostics.model_copy(update={"requests": sorted(requests)})
    return scenario.model_copy(update={"diagnostics": diagnostics})


# -------------------- CLI --------------------
@click.group()
@click.option("--scenario", "scenario_path", type=click.Path(dir_okay=False), help="Scenario TOML file.")
@click.option("--out", type=click.Path(file_okay=False), help="Artifact directory.")
@click.option("--threads", type=int, default=config.DEFAULT_THREADS, show_default=True, help="Concurrent sweep cells.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--log-level", default=config.LOG_LEVEL, show_default=True)
@click.pass_context
def cli(ctx, scenario_path, out, threads, seed, log_level):
    """Radial defocusing wave laboratory."""
    config.configure_logging(log_level)
    ctx.ensure_object(dict)
    ctx.obj.update(scenario=scenario_path, out=out, threads=threads, seed=seed)


@cli.command("run")
@click.pass_context
def run_command(ctx):
    """Simulate a scenario and write its artifact directory."""
    try:
        scenario = require_scenario(ctx)
        result = run(scenario, output_dir(ctx, scenario))
    except LabError as exc:
        fail(exc)
    click.echo(f"artifacts: {result.directory}")
    show_verdicts(result.verdicts)
    sys.exit(0 if result.passed else 1)


@cli.command("verify")
@click.pass_context
def verify_command(ctx):
    """Run the full invariant suite on a scenario."""
    try:
        scenario = full_suite(require_scenario(ctx))
        result = run(scenario, output_dir(ctx, scenario))
    except LabError as exc:
        fail(exc)
    show_verdicts(result.verdicts)
    failed = [v.name for v in result.verdicts if not v.passed]
    if failed:
        click.secho(f"{len(failed)} verdict(s) failed: {', '.join(failed)}", fg="red")
        sys.exit(1)
    click.secho(f"all {len(result.verdicts)} verdicts passed", fg="green")


@cli.command("extract-radiation")
@click.option("--eta-min", type=float, default=None)
@click.option("--eta-max", type=float, default=None)
@click.pass_context
def extract_command(ctx, eta_min, eta_max):
    """Simulate a scenario and write its radiation profile CSV."""
    try:
        scenario = require_scenario(ctx)
        out = output_dir(ctx, scenario)
        params = scenario.params
        grid = build_grid(scenario)
        traj = simulate(scenario, materialize(scenario.initial_data, grid, params, scenario.seed))
        times = scenario.diagnostics.extraction_times or list(traj.times[-2:])
        support = scenario.initial_data.support_radius(params) or 0.0
        lo = -support - 1.0 if eta_min is None else eta_min
        hi = min(times) - 1.0 if eta_max is None else eta_max
        profile = extract_radiation(traj, default_eta_grid(grid.h, lo, hi), times, params)
        path = save_profile(profile, out / "radiation.csv")
    except LabError as exc:
        fail(exc)
    click.echo(f"profile: {path}")
    click.echo(f"  ||g||^2 = {profile.norm_sq():.6g}   max quality = {profile.quality.max():.3g}")


@cli.command("invert-radiation")
@click.argument("profile_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--t-match", type=float, default=None, help="Matching time (default 50 x support radius).")
@click.pass_context
def invert_command(ctx, profile_path, t_match):
    """Recover free-wave data (u0, u1) from a radiation profile CSV."""
    try:
        profile = load_profile(profile_path)
        params = profile.params
        t_match = t_match or 50.0 * max(profile.support_radius, 1.0)
        data = invert_radiation(profile, t_match, params)
        out = output_dir(ctx)
        path = save_state(data, params, out / "recovered.csv")
        linear = linear_params(params)
        c_d = derive_constants(linear).c_d
        norms = {
            "profile_norm_sq": profile.tapered().norm_sq(),
            "data_norm_sq_over_2c_d": energy_norm_sq(data, linear) / (2.0 * c_d),
            "t_match": t_match,
        }
        write_json(out / "recovered.json", norms)
    except LabError as exc:
        fail(exc)
    except (OSError, ValueError, KeyError) as exc:
        click.secho(f"error: cannot read {profile_path}: {exc}", fg="red", err=True)
        sys.exit(2)
    click.echo(f"recovered data: {path}")
    click.echo(f"  ||g||^2 = {norms['profile_norm_sq']:.6g}   ||(u0,u1)||^2/(2c_d) = {norms['data_norm_sq_over_2c_d']:.6g}")


@cli.command("sweep")
@click.option("--axis", "axes", multiple=True, required=True, help="NAME=v1,v2,... with NAME in d, p, kappa, epsilon, h.")
@click.pass_context
def sweep_command(ctx, axes):
    """Run a scenario template over the cartesian product of the axes."""
    try:
        template = require_scenario(ctx)
        parsed = dict(parse_axis(spec) for spec in axes)
        out = output_dir(ctx, template)
        rows = sweep(template, parsed, out, ctx.obj["threads"])
    except LabError as exc:
        fail(exc)
    failed = [row for row in rows if row["status"] != "ok" or not row["passed"]]
    click.echo(f"sweep: {len(rows)} cells, {len(failed)} failing -> {out / 'sweep.csv'}")
    for row in failed:
        click.secho(f"  cell {row['cell']}: {row['status']} {row['error'] or row['failed_verdicts']}", fg="yellow")
    sys.exit(1 if failed else 0)


@cli.command("plot")
@click.argument("artifact", required=False, type=click.Path(file_okay=False))
@click.pass_context
def plot_command(ctx, artifact):
    """Write SVG plots for an artifact directory."""
    if artifact is None:
        try:
            scenario = require_scenario(ctx) if ctx.obj["scenario"] else None
        except LabError as exc:
            fail(exc)
        artifact = output_dir(ctx, scenario)
    written, notes = emit_plots(artifact)
    for note in notes:
        click.secho(f"note: {note}", fg="yellow")
    click.echo(f"{len(written)} file(s) written")


if __name__ == "__main__":
    cli()
