"""Scenario loading, initial-data families, single runs and parameter sweeps."""

import csv
import io
import itertools
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Optional

import anyio
import anyio.to_thread
import numpy as np
from pydantic import BaseModel, ValidationError

import config
from database import init_db, session_scope
from diagnostics import (
    Verdict,
    build_records,
    cone_monotonicity,
    cone_surface_bounds,
    energy_distribution_check,
    exterior_deficit,
    flux_balance,
    full_deficit,
    hardy_series,
    inner_energy_sup,
    interior_decay,
    late_max,
    middle_band_deficit,
    morawetz_report,
    pointwise_ratio,
    potential_series,
    refinement_orders,
    scattering_energy_split,
    write_records,
)
from exceptions import DomainError, LabError, ScenarioError
from grid_state import FieldState, RadialGrid, energy, extend_state, save_state
from models import SweepCell
from params import ModelParams, derive_constants
from radiation import (
    default_eta_grid,
    extract_radiation,
    invert_radiation,
    load_profile,
    save_profile,
    smooth_ramp,
    support_radius,
    linear_params,
)
from schemas import (
    CompactBumpFamily,
    FromRadiationFamily,
    GaussianFamily,
    PowerTailFamily,
    RandomSmoothFamily,
    Scenario,
    DOMAIN_MARGIN,
)
from solver_char import evolve_char, save_reduced_trajectory
from solver_fd import EvolutionConfig, Trajectory, evolve, evolve_both, save_trajectory
from utils.io import atomic_write_text, write_json, write_table

logger = logging.getLogger(__name__)

SWEEP_AXES = ("d", "p", "kappa", "epsilon", "h")


# -------------------- LOADING --------------------
def _field_path(loc) -> str:
    return ".".join(str(part) for part in loc)


def load_scenario(path: str | Path) -> Scenario:
    """Parse a TOML scenario file and validate it completely."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ScenarioError(f"{path}: no such scenario file")
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}")

    family = raw.get("initial_data", {})
    if family.get("family") == "from_radiation" and "profile" in family:
        profile = Path(family["profile"])
        if not profile.is_absolute():
            family["profile"] = str((path.parent / profile).resolve())
    return scenario_from_dict(raw, source=str(path))


def scenario_from_dict(raw: dict, source: str = "<scenario>") -> Scenario:
    try:
        return Scenario.model_validate(raw)
    except ValidationError as exc:
        problems = "; ".join(f"{_field_path(e['loc']) or 'scenario'}: {e['msg']}" for e in exc.errors())
        raise ScenarioError(f"{source}: {problems}")


# -------------------- INITIAL DATA --------------------
def _cutoff(r: np.ndarray, support: float) -> np.ndarray:
    """1 inside 0.75 support, smooth cubic fall to 0 at support."""
    width = 0.25 * support
    return 1.0 - smooth_ramp((r - (support - width)) / width)


def _even_gaussian(r, center, width):
    return np.exp(-(((r - center) / width) ** 2)) + (np.exp(-(((r + center) / width) ** 2)) if center > 0 else 0.0)


def quintic_step(x):
    """10x³ - 15x⁴ + 6x⁵ on [0, 1]; C² at both ends."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def power_tail_exponent(params: ModelParams, epsilon: float) -> float:
    return 2.0 * (params.p + params.d + 1) / (params.p + 1) ** 2 + epsilon


def power_tail_report(family: PowerTailFamily, params: ModelParams) -> dict:
    """Tail exponents of the E_κ0 integrand for u0 ~ r^{-α}; finite when both are < -1."""
    consts = derive_constants(params)
    alpha = power_tail_exponent(params, family.epsilon)
    kappa, d, p = consts.kappa_0, params.d, params.p
    return {
        "alpha": alpha,
        "kappa_0": kappa,
        "gradient_tail_exponent": kappa + d - 3 - 2 * alpha,
        "potential_tail_exponent": kappa + d - 1 - alpha * (p + 1),
        "weighted_energy_finite": max(kappa + d - 3 - 2 * alpha, kappa + d - 1 - alpha * (p + 1)) < -1,
        # u0 ~ r^{-α} lies outside Ḣ^{s_p} when α <= 2/(p-1)
        "critical_sobolev_margin": alpha - 2.0 / (p - 1),
    }


def _random_profile(rng: np.random.Generator, family: RandomSmoothFamily, r: np.ndarray) -> np.ndarray:
    profile = np.zeros_like(r)
    for _ in range(family.n_bumps):
        center = rng.uniform(0.0, family.max_center)
        width = rng.uniform(family.min_width, family.max_width)
        amplitude = rng.uniform(-family.amplitude, family.amplitude)
        profile += amplitude * _even_gaussian(r, center, width)
    return profile


def materialize(family, grid: RadialGrid, params: ModelParams, seed: int = 0) -> FieldState:
    """Sample an initial-data family on ``grid`` at t = 0."""
    r = grid.r
    zero = np.zeros_like(r)
    match family:
        case GaussianFamily():
            profile = family.amplitude * _even_gaussian(r, family.center, family.width)
            profile *= _cutoff(r, family.support_radius(params))
            u0, u1 = (zero, profile) if family.in_velocity else (profile, zero)
        case CompactBumpFamily():
            a, b = family.inner_radius, family.outer_radius
            if a == 0:
                shape = np.clip(1.0 - (r / b) ** 2, 0.0, None) ** 4
            else:
                shape = np.clip(4.0 * (r - a) * (b - r) / (b - a) ** 2, 0.0, None) ** 4
            profile = family.amplitude * shape
            u0, u1 = (zero, profile) if family.in_velocity else (profile, zero)
        case PowerTailFamily():
            alpha = power_tail_exponent(params, family.epsilon)
            blend = quintic_step(r - 1.0)
            tail = np.maximum(r, 1.0) ** (-alpha)
            u0 = family.amplitude * ((1.0 - blend) + blend * tail) * _cutoff(r, family.support)
            u1 = zero
            logger.info("power tail: %s", power_tail_report(family, params))
        case RandomSmoothFamily():
            key = seed if family.seed is None else family.seed
            rng = np.random.Generator(np.random.Philox(key=key))
            window = _cutoff(r, family.support_radius(params))
            u0 = _random_profile(rng, family, r) * window
            u1 = _random_profile(rng, family, r) * window
        case FromRadiationFamily():
            return _from_radiation(family, grid, params)
        case _:
            raise ScenarioError(f"unknown initial-data family {family!r}")
    return FieldState(grid, 0.0, u0, u1)


def _from_radiation(family: FromRadiationFamily, grid: RadialGrid, params: ModelParams) -> FieldState:
    try:
        profile = load_profile(family.profile)
    except (OSError, ValueError, KeyError) as exc:
        raise ScenarioError(f"cannot read radiation profile {family.profile}: {exc}")
    if profile.params.d != params.d:
        raise ScenarioError(f"profile was extracted in d={profile.params.d}, scenario has d={params.d}")
    t_match = family.t_match or 50.0 * max(profile.support_radius, 1.0)
    data = invert_radiation(profile, t_match, params)
    u = np.interp(grid.r, data.grid.r, data.u, right=0.0)
    ut = np.interp(grid.r, data.grid.r, data.ut, right=0.0)
    u[-1] = ut[-1] = 0.0
    return FieldState(grid, 0.0, u, ut)


# -------------------- RUNS --------------------
class RunResult(BaseModel):
    directory: str
    passed: bool
    verdicts: list[Verdict]
    summary: dict[str, Any]


def build_grid(scenario: Scenario) -> RadialGrid:
    return RadialGrid.from_spacing(scenario.grid.r_max, scenario.grid.h)


def simulate(scenario: Scenario, initial: FieldState, out: Optional[Path] = None) -> Trajectory:
    """Field trajectory of the scenario; characteristic runs also write their
    reduced snapshots to ``out/trajectory_reduced`` when ``out`` is given."""
    params = scenario.params
    spec = scenario.evolution
    grid = initial.grid
    if spec.solver == "char":
        stride = max(1, round(spec.snapshot_every / grid.h))
        reduced = evolve_char(initial, spec.t_end, params, stride)
        if out is not None:
            save_reduced_trajectory(reduced, out / "trajectory_reduced")
        return reduced.to_field()
    cfg = EvolutionConfig.sampled(spec.t_end, grid.h, spec.snapshot_every, spec.cfl)
    if spec.both_directions:
        return evolve_both(initial, cfg, params)
    return evolve(initial, cfg, params)


def _check_runtime_domain(scenario: Scenario, initial: FieldState) -> None:
    if scenario.initial_data.support_radius(scenario.params) is not None:
        return
    support = support_radius(initial, rel=1e-10)
    needed = support + scenario.evolution.t_end + DOMAIN_MARGIN
    if initial.grid.r_max < needed:
        raise DomainError(f"materialized data reach r={support:g}; need r_max >= {needed:g}")


def _free_comparison(scenario: Scenario, traj: Trajectory, profile) -> Trajectory:
    """Linear run from invert_radiation(profile), sampled like ``traj``."""
    spec = scenario.evolution
    t_match = scenario.diagnostics.t_match or traj.times[-1]
    data = invert_radiation(profile, t_match, scenario.params)
    data = extend_state(data, max(data.grid.r_max, traj.grid.r_max) + spec.t_end + DOMAIN_MARGIN)
    cfg = EvolutionConfig.sampled(spec.t_end, data.grid.h, spec.snapshot_every, spec.cfl)
    return evolve(data, cfg, linear_params(scenario.params))


def evaluate(scenario: Scenario, traj: Trajectory, out: Optional[Path] = None):
    """Run every requested diagnostic; returns (records, verdicts, results)."""
    params = scenario.params
    diag = scenario.diagnostics
    tol = scenario.tolerances
    requests = set(diag.requests)
    verdicts: list[Verdict] = []
    results: dict[str, Any] = {}
    E0 = energy(traj.at(0.0), params)
    t_first, t_last = float(traj.times[0]), float(traj.times[-1])

    if "energy" in requests:
        energies = np.array([energy(s, params) for s in traj.snapshots])
        drift = float(np.max(np.abs(energies - E0)) / E0) if E0 > 0 else 0.0
        results["energy"] = {"initial": E0, "final": float(energies[-1]), "max_drift": drift}
        verdicts.append(Verdict(name="energy_drift", passed=drift <= tol.energy_drift, value=drift, bound=tol.energy_drift))

    if "flux" in requests:
        t1, t2 = diag.flux_window or (max(diag.eta, t_first), min(t_last, diag.eta + traj.grid.r_max))
        balance = flux_balance(traj, diag.eta, t1, t2, params)
        results["flux"] = balance.model_dump() | {"residual": balance.residual, "window": [t1, t2]}
        verdicts.append(balance.verdict(tol))

    if "cone" in requests:
        forward = cone_monotonicity(traj, diag.eta, params)
        backward = cone_monotonicity(traj, t_last, params, direction="backward")
        bounds = cone_surface_bounds(traj, diag.eta, params)
        results["cone"] = {
            "forward_worst": forward.worst_increment,
            "backward_worst": backward.worst_increment,
            "inner_energy_sup": inner_energy_sup(traj, diag.eta, params),
            **bounds.model_dump(),
        }
        verdicts += [forward.verdict(tol), backward.verdict(tol), bounds.verdict(tol)]

    if "morawetz" in requests:
        report = morawetz_report(traj, diag.morawetz_radius, params)
        results["morawetz"] = report.model_dump() | {"ratio": report.total / (2 * report.energy) if report.energy else 0.0}
        verdicts.append(report.verdict(tol))

    if "energy_distribution" in requests:
        check = energy_distribution_check(traj, diag.distribution_radius, params)
        results["energy_distribution"] = check.model_dump()
        verdicts.append(check.verdict(tol))

    if "potential" in requests:
        series = potential_series(traj, params)
        results["potential"] = {"liminf_proxy": series.liminf_proxy, "initial": series.values[0]}
        verdicts.append(series.verdict(tol))

    if "pointwise" in requests:
        worst = max((pointwise_ratio(s, params).verdict(tol) for s in traj.snapshots), key=lambda v: v.value)
        results["pointwise"] = {"worst_normalised_ratio": worst.value}
        verdicts.append(worst)

    if "hardy" in requests:
        _, hardy = hardy_series(traj, params)
        results["hardy"] = {"initial": float(hardy[0]), "final": float(hardy[-1])}

    profile = None
    if scenario.wants_radiation:
        profile = _extract(scenario, traj)
        c_d = derive_constants(params).c_d
        bound = E0 / c_d * (1.0 + tol.radiation_bound)
        results["radiation"] = {
            "norm_sq": profile.norm_sq(),
            "energy_over_c_d": E0 / c_d,
            "max_quality": float(profile.quality.max()),
            "t_extract": profile.t_extract,
        }
        verdicts.append(Verdict(name="radiation_bound", passed=profile.norm_sq() <= bound, value=profile.norm_sq(), bound=bound))
        if out is not None:
            save_profile(profile, out / "radiation.csv")

    free = None
    if requests & {"exterior_deficit", "full_deficit"}:
        free = _free_comparison(scenario, traj, profile)
    if "exterior_deficit" in requests:
        series = exterior_deficit(traj, free, diag.eta, params)
        v = series.verdict(tol, t_ref=diag.deficit_reference_time)
        results["exterior_deficit"] = {"decay_ratio": v.value, "final": series.values[-1]}
        verdicts.append(v)
    if "full_deficit" in requests:
        series = full_deficit(traj, free, profile, params)
        v = series.verdict(tol, bound=tol.full_deficit)
        v.name = "full_deficit_decay"
        results["full_deficit"] = {
            "decay_ratio": v.value,
            "gap": series.gap,
            "radiated_energy": series.radiated_energy,
            "energy_split": scattering_energy_split(traj, profile, params).model_dump(),
        }
        verdicts += [v] + series.gap_verdicts(tol)
    if "middle_band" in requests:
        series = middle_band_deficit(traj, profile, diag.band_c, diag.band_gamma, diag.band_radius, params)
        v = series.verdict(tol, bound=tol.middle_band)
        v.name = "middle_band_decay"
        results["middle_band"] = {"decay_ratio": v.value, "late_max": late_max(series), "gamma": diag.band_gamma}
        verdicts.append(v)

    if "interior_decay" in requests:
        decay = interior_decay(traj, diag.decay_c, scenario.decay_kappa, params, diag.decay_window, with_bound=True)
        if out is not None:
            write_table(
                out / "interior_decay.csv",
                {"kappa": scenario.decay_kappa, "c": diag.decay_c},
                {"t": decay.times, "energy": decay.values, "bound": decay.bound or [np.nan] * len(decay.times)},
            )
        fit = decay.fit
        results["interior_decay"] = {
            "kappa": scenario.decay_kappa,
            "fit": fit.model_dump() if fit else None,
            "below_bound": decay.below_bound,
        }
        verdicts.append(
            Verdict(
                name="interior_decay",
                passed=fit is not None and fit.exponent < 0 and fit.r2 >= tol.decay_r2,
                value=fit.exponent if fit else float("nan"),
                bound=0.0,
                detail=f"r2={fit.r2:.3f}" if fit else "no fit",
            )
        )

    eta = diag.eta if requests & {"flux", "cone", "exterior_deficit"} else None
    radius = diag.morawetz_radius if "morawetz" in requests else None
    records = build_records(traj, params, eta=eta, morawetz_radius=radius, free=free if "exterior_deficit" in requests else None)
    return records, verdicts, results


def _extract(scenario: Scenario, traj: Trajectory):
    diag = scenario.diagnostics
    times = diag.extraction_times or list(traj.times[-2:])
    t_late = max(times)
    support = scenario.initial_data.support_radius(scenario.params) or 0.0
    lo, hi = diag.eta_range or (-support - 1.0, 0.5 * t_late)
    hi = min(hi, min(times) - 1.0)
    return extract_radiation(traj, default_eta_grid(traj.grid.h, lo, hi), times, scenario.params)


def run(scenario: Scenario, out: str | Path | None = None) -> RunResult:
    """Simulate, evaluate and write the artifact directory."""
    out = Path(out or scenario.output_dir or Path(config.DEFAULT_OUT) / scenario.name)
    params = scenario.params
    grid = build_grid(scenario)
    initial = materialize(scenario.initial_data, grid, params, scenario.seed)
    _check_runtime_domain(scenario, initial)
    logger.info("running scenario %s into %s", scenario.name, out)

    traj = simulate(scenario, initial, out)
    traj.provenance["scenario"] = scenario.name
    records, verdicts, results = evaluate(scenario, traj, out)

    save_state(initial, params, out / "initial.csv")
    save_trajectory(traj, out / "trajectory")
    write_records(records, out / "diagnostics.csv", {"scenario": scenario.name, "params": params.model_dump()})
    passed = all(v.passed for v in verdicts)
    write_json(out / "verdicts.json", {"passed": passed, "verdicts": [v.model_dump() for v in verdicts]})

    summary = {
        "schema_version": config.SUMMARY_SCHEMA_VERSION,
        "code_version": config.CODE_VERSION,
        "scenario": scenario.model_dump(mode="json"),
        "constants": derive_constants(params).model_dump(),
        "grid": grid.to_dict(),
        "snapshots": len(traj.snapshots),
        "passed": passed,
        "verdicts": [v.model_dump() for v in verdicts],
        "results": results,
    }
    if isinstance(scenario.initial_data, PowerTailFamily):
        summary["power_tail"] = power_tail_report(scenario.initial_data, params)
    write_json(out / "summary.json", summary)
    return RunResult(directory=str(out), passed=passed, verdicts=verdicts, summary=summary)


# -------------------- SWEEPS --------------------
def _apply_axes(template: Scenario, cell: dict[str, float]) -> dict:
    raw = template.model_dump(mode="json")
    for axis, value in cell.items():
        if axis == "d":
            raw["params"]["d"] = int(value)
        elif axis == "p":
            raw["params"]["p"] = value
        elif axis == "h":
            raw["grid"]["h"] = value
        elif axis == "kappa":
            raw["diagnostics"]["decay_kappa"] = value
        elif axis == "epsilon":
            if raw["initial_data"]["family"] != "power_tail":
                raise ScenarioError("the epsilon axis needs a power_tail template")
            raw["initial_data"]["epsilon"] = value
        else:
            raise ScenarioError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    return raw


def run_cell(template: Scenario, index: int, cell: dict[str, float], out: Path) -> dict:
    """One sweep cell; failures become a row instead of an exception."""
    row = {"cell": index, **cell, "status": "ok", "error": "", "passed": False, "energy": float("nan"),
           "max_drift": float("nan"), "decay_exponent": float("nan"), "failed_verdicts": ""}
    try:
        scenario = scenario_from_dict(_apply_axes(template, cell), source=f"cell {index}")
        result = run(scenario, out / f"cell_{index:03d}")
    except LabError as exc:
        logger.warning("sweep cell %d failed: %s", index, exc.detail)
        row.update(status=type(exc).__name__, error=exc.detail)
        return row
    results = result.summary["results"]
    energy_info = results.get("energy", {})
    fit = (results.get("interior_decay") or {}).get("fit") or {}
    row.update(
        passed=result.passed,
        energy=energy_info.get("initial", float("nan")),
        max_drift=energy_info.get("max_drift", float("nan")),
        decay_exponent=fit.get("exponent", float("nan")),
        failed_verdicts=",".join(v.name for v in result.verdicts if not v.passed),
    )
    return row


async def _run_cells(template: Scenario, cells: list[dict], out: Path, threads: int) -> list[dict]:
    limiter = anyio.CapacityLimiter(max(1, threads))
    rows: list[dict] = []

    async def worker(index: int, cell: dict):
        row = await anyio.to_thread.run_sync(run_cell, template, index, cell, out, limiter=limiter)
        rows.append(row)

    async with anyio.create_task_group() as tg:
        for index, cell in enumerate(cells):
            tg.start_soon(worker, index, cell)
    return sorted(rows, key=lambda row: row["cell"])


def _convergence(rows: list[dict], axes: dict[str, list[float]]) -> dict:
    """Observed orders of the energy drift along the h axis, other axes fixed."""
    if len(axes.get("h", [])) < 2:
        return {}
    others = [a for a in axes if a != "h"]
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row[a] for a in others), []).append(row)
    orders = {}
    for key, members in groups.items():
        members = sorted(members, key=lambda row: -row["h"])
        drifts = [row["max_drift"] for row in members]
        label = ",".join(f"{a}={v}" for a, v in zip(others, key)) or "all"
        orders[label] = refinement_orders(drifts)
    return orders


def write_sweep_table(rows: list[dict], path: Path) -> Path:
    buffer = io.StringIO()
    if rows:
        writer = csv.DictWriter(buffer, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return atomic_write_text(path, buffer.getvalue())


def sweep(template: Scenario, axes: dict[str, list[float]], out: str | Path, threads: int | None = None) -> list[dict]:
    """Run the cartesian product of ``axes`` over ``template``."""
    unknown = set(axes) - set(SWEEP_AXES)
    if unknown:
        raise ScenarioError(f"unknown sweep axes {sorted(unknown)}; expected a subset of {SWEEP_AXES}")
    out = Path(out)
    names = list(axes)
    cells = [dict(zip(names, values)) for values in itertools.product(*(axes[n] for n in names))]
    logger.info("sweep over %s: %d cells", names, len(cells))
    rows = anyio.run(_run_cells, template, cells, out, threads or config.DEFAULT_THREADS)

    write_sweep_table(rows, out / "sweep.csv")
    write_json(out / "sweep.json", {"axes": axes, "rows": rows, "convergence": _convergence(rows, axes)})
    init_db(out)
    with session_scope(out) as session:
        for row in rows:
            session.add(SweepCell.from_row(template.name, row))
    return rows


def parse_axis(spec: str) -> tuple[str, list[float]]:
    """``"h=0.04,0.02,0.01"`` -> ("h", [0.04, 0.02, 0.01])."""
    name, _, values = spec.partition("=")
    name = name.strip()
    if not values or name not in SWEEP_AXES:
        raise ScenarioError(f"bad axis {spec!r}; use NAME=v1,v2,... with NAME in {SWEEP_AXES}")
    try:
        return name, [float(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise ScenarioError(f"bad axis values in {spec!r}: {exc}")
