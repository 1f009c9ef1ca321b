import json
import textwrap
from pathlib import Path

import numpy as np
import pytest
from sqlalchemy import func, select

import config
from conftest import bump_prime
from database import session_scope
from exceptions import ScenarioError
from grid_state import RadialGrid, weighted_energy
from models import SweepCell
from params import ModelParams, derive_constants
from radiation import RadiationProfile, default_eta_grid, save_profile
from scenarios import (
    build_grid,
    load_scenario,
    materialize,
    parse_axis,
    power_tail_exponent,
    power_tail_report,
    run,
    scenario_from_dict,
    sweep,
)
from schemas import CompactBumpFamily, GaussianFamily, PowerTailFamily, RandomSmoothFamily
from utils.io import read_table
from utils.plots import emit_plots

MINIMAL = """
name = "minimal"

[params]
d = 4
p = "7/3"

[grid]
r_max = 12.0
h = 0.1

[evolution]
t_end = 4.0
snapshot_every = 0.5

[initial_data]
family = "compact_bump"
outer_radius = 2.0
"""


def write_scenario(tmp_path, text, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text), encoding="utf-8")
    return path


def scenario_dict(**overrides):
    raw = {
        "name": "bump",
        "params": {"d": 4, "p": 7.0 / 3.0},
        "grid": {"r_max": 12.0, "h": 0.1},
        "evolution": {"t_end": 4.0, "snapshot_every": 0.5},
        "initial_data": {"family": "compact_bump", "outer_radius": 2.0},
        "diagnostics": {"requests": ["energy", "flux", "cone", "morawetz", "potential", "pointwise", "radiation"]},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(raw.get(key), dict):
            raw[key] = {**raw[key], **value}
        else:
            raw[key] = value
    return raw


@pytest.fixture(autouse=True)
def local_database(monkeypatch):
    monkeypatch.setattr(config, "DATABASE_URL", None)


# -------------------- LOADING --------------------
def test_minimal_scenario_defaults(tmp_path):
    scenario = load_scenario(write_scenario(tmp_path, MINIMAL))
    assert scenario.params == ModelParams(d=4, p=7.0 / 3.0, zeta=-1)
    assert scenario.evolution.solver == "fd"
    assert scenario.diagnostics.requests == ["energy", "pointwise"]
    assert scenario.decay_kappa == pytest.approx(0.4)


def test_out_of_range_dimension(tmp_path):
    with pytest.raises(ScenarioError) as err:
        load_scenario(write_scenario(tmp_path, MINIMAL.replace("d = 4", "d = 7")))
    assert "d out of range" in err.value.detail
    assert err.value.exit_code == 2


def test_domain_contract_is_enforced(tmp_path):
    with pytest.raises(ScenarioError) as err:
        load_scenario(write_scenario(tmp_path, MINIMAL.replace("r_max = 12.0", "r_max = 7.0")))
    assert "domain contract" in err.value.detail


def test_unreadable_scenarios(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "missing.toml")
    with pytest.raises(ScenarioError):
        load_scenario(write_scenario(tmp_path, "[params\nd = 3"))
    with pytest.raises(ScenarioError):
        load_scenario(write_scenario(tmp_path, MINIMAL + "\nunknown_key = 1\n"))


def test_nonlinear_diagnostics_need_defocusing():
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(scenario_dict(params={"d": 4, "p": 7.0 / 3.0, "zeta": 0}))
    assert "zeta = -1" in err.value.detail


def test_energy_distribution_needs_both_directions():
    with pytest.raises(ScenarioError):
        scenario_from_dict(scenario_dict(diagnostics={"requests": ["energy_distribution"]}))
    scenario = scenario_from_dict(
        scenario_dict(diagnostics={"requests": ["energy_distribution"]}, evolution={"t_end": 4.0, "both_directions": True})
    )
    assert scenario.evolution.both_directions


def test_band_exponent_is_limited():
    with pytest.raises(ScenarioError):
        scenario_from_dict(scenario_dict(diagnostics={"requests": ["middle_band"], "band_gamma": 0.9}))


# -------------------- INITIAL DATA --------------------
def test_gaussian_family_is_cut_off():
    params = ModelParams(d=3, p=3.0)
    grid = RadialGrid.from_spacing(12.0, 0.05)
    state = materialize(GaussianFamily(family="gaussian"), grid, params)
    inside = grid.r <= 6.0
    np.testing.assert_allclose(state.u[inside], np.exp(-grid.r[inside] ** 2), rtol=1e-14)
    assert not state.u[grid.r >= 8.0].any()
    assert not state.ut.any()


def test_shell_bump_lives_between_its_radii():
    params = ModelParams(d=5, p=2.0)
    grid = RadialGrid.from_spacing(10.0, 0.05)
    family = CompactBumpFamily(family="compact_bump", inner_radius=2.0, outer_radius=4.0, in_velocity=True)
    state = materialize(family, grid, params)
    assert not state.u.any()
    assert not state.ut[(grid.r <= 2.0) | (grid.r >= 4.0)].any()
    assert state.ut.max() == pytest.approx(1.0)


def test_random_family_is_reproducible():
    params = ModelParams(d=4, p=7.0 / 3.0)
    grid = RadialGrid.from_spacing(16.0, 0.05)
    family = RandomSmoothFamily(family="random_smooth")
    first, again = materialize(family, grid, params, seed=3), materialize(family, grid, params, seed=3)
    other = materialize(family, grid, params, seed=4)
    assert np.array_equal(first.u, again.u) and np.array_equal(first.ut, again.ut)
    assert not np.array_equal(first.u, other.u)
    pinned = RandomSmoothFamily(family="random_smooth", seed=3)
    assert np.array_equal(materialize(pinned, grid, params, seed=99).u, first.u)
    assert not first.u[grid.r >= family.support_radius(params)].any()


def test_power_tail_weighted_energy_is_stable_under_truncation():
    params = ModelParams(d=3, p=3.0)
    kappa = derive_constants(params).kappa_0
    grid = RadialGrid.from_spacing(130.0, 0.05)
    energies = []
    for support in (60.0, 120.0):
        family = PowerTailFamily(family="power_tail", epsilon=0.5, support=support)
        energies.append(weighted_energy(materialize(family, grid, params), kappa, params))
    assert energies[1] == pytest.approx(energies[0], rel=2e-2)


def test_power_tail_report():
    params = ModelParams(d=3, p=3.0)
    report = power_tail_report(PowerTailFamily(family="power_tail", epsilon=0.5), params)
    assert report["alpha"] == pytest.approx(1.375)
    assert power_tail_exponent(params, 0.5) == report["alpha"]
    assert report["weighted_energy_finite"]
    assert report["critical_sobolev_margin"] == pytest.approx(0.375)


def test_power_tail_is_flat_near_origin():
    params = ModelParams(d=4, p=7.0 / 3.0)
    grid = RadialGrid.from_spacing(80.0, 0.05)
    state = materialize(PowerTailFamily(family="power_tail", epsilon=0.2, amplitude=2.0), grid, params)
    np.testing.assert_allclose(state.u[grid.r <= 1.0], 2.0)
    assert not state.u[grid.r >= 60.0].any()


def test_radiation_family_resolves_relative_profile(tmp_path):
    params = ModelParams(d=3, p=3.0, zeta=0)
    eta = default_eta_grid(0.05, -3.0, 3.0)
    save_profile(RadiationProfile(eta, bump_prime(eta), np.zeros_like(eta), 0.0, params), tmp_path / "g.csv")
    text = MINIMAL.replace('family = "compact_bump"\nouter_radius = 2.0', 'family = "from_radiation"\nprofile = "g.csv"\nsupport = 2.0')
    scenario = load_scenario(write_scenario(tmp_path, text))
    assert scenario.initial_data.profile == str((tmp_path / "g.csv").resolve())
    with pytest.raises(ScenarioError) as err:
        materialize(scenario.initial_data, build_grid(scenario), scenario.params)
    assert "d=3" in err.value.detail


# -------------------- RUNS --------------------
def test_zero_data_passes_every_check(tmp_path):
    scenario = scenario_from_dict(scenario_dict(initial_data={"family": "compact_bump", "outer_radius": 2.0, "amplitude": 0.0}))
    result = run(scenario, tmp_path / "zero")
    assert result.passed
    assert {v.name for v in result.verdicts} >= {"energy_drift", "flux_balance", "morawetz", "radiation_bound"}
    for name in ("initial.csv", "diagnostics.csv", "verdicts.json", "summary.json", "radiation.csv", "trajectory/index.json"):
        assert (tmp_path / "zero" / name).exists()


def test_runs_are_deterministic(tmp_path):
    scenario = scenario_from_dict(scenario_dict())
    run(scenario, tmp_path / "a")
    run(scenario, tmp_path / "b")
    for name in ("summary.json", "diagnostics.csv", "verdicts.json", "radiation.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bump_run_verdicts(tmp_path):
    raw = scenario_dict(grid={"h": 0.02}, evolution={"snapshot_every": 0.1})
    result = run(scenario_from_dict(raw), tmp_path / "bump")
    summary = json.loads((tmp_path / "bump" / "summary.json").read_text())
    assert summary["passed"] == result.passed
    assert summary["constants"]["kappa_0"] == pytest.approx(0.4)
    assert summary["results"]["energy"]["initial"] > 0
    assert summary["snapshots"] == 41
    verdicts = {v.name: v for v in result.verdicts}
    for name in ("energy_drift", "flux_balance", "morawetz", "pointwise", "radiation_bound", "cone_flux_bound"):
        assert verdicts[name].passed, verdicts[name]
    cone = summary["results"]["cone"]
    assert 0 < cone["inner_energy_sup"] <= summary["results"]["energy"]["initial"] * (1 + 1e-3)


def test_characteristic_run_writes_reduced_snapshots(tmp_path):
    raw = scenario_dict(evolution={"solver": "char"}, diagnostics={"requests": ["energy"]})
    result = run(scenario_from_dict(raw), tmp_path / "char")
    index = json.loads((tmp_path / "char" / "trajectory_reduced" / "index.json").read_text())
    assert len(index["files"]) == result.summary["snapshots"]
    header, columns = read_table(tmp_path / "char" / "trajectory_reduced" / index["files"][-1])
    assert list(columns) == ["r", "w", "v_plus", "v_minus"]
    assert header["t"] == pytest.approx(4.0)


def test_impossible_tolerance_fails_the_run(tmp_path):
    scenario = scenario_from_dict(scenario_dict(tolerances={"energy_drift": 1e-16}))
    result = run(scenario, tmp_path / "strict")
    assert not result.passed
    assert "energy_drift" in [v.name for v in result.verdicts if not v.passed]


def test_interior_decay_artifact(tmp_path):
    raw = scenario_dict(
        params={"d": 3, "p": 3.0},
        grid={"r_max": 30.0, "h": 0.1},
        evolution={"t_end": 20.0, "snapshot_every": 0.5},
        diagnostics={"requests": ["energy", "interior_decay"]},
        initial_data={"family": "compact_bump", "outer_radius": 2.0, "amplitude": 2.0},
    )
    result = run(scenario_from_dict(raw), tmp_path / "decay")
    assert result.summary["results"]["interior_decay"]["kappa"] == pytest.approx(0.5)
    assert (tmp_path / "decay" / "interior_decay.csv").exists()
    written, _ = emit_plots(tmp_path / "decay")
    assert tmp_path / "decay" / "plots" / "interior_decay.svg" in written


# -------------------- SWEEPS --------------------
def test_single_cell_sweep_matches_run(tmp_path):
    template = scenario_from_dict(scenario_dict())
    rows = sweep(template, {"h": [0.1]}, tmp_path / "sweep")
    direct = run(template, tmp_path / "direct")
    assert len(rows) == 1 and rows[0]["status"] == "ok"
    assert rows[0]["passed"] == direct.passed
    cell = tmp_path / "sweep" / "cell_000"
    assert (cell / "verdicts.json").read_bytes() == (tmp_path / "direct" / "verdicts.json").read_bytes()


def test_sweep_records_every_cell(tmp_path):
    template = scenario_from_dict(scenario_dict(diagnostics={"requests": ["energy"]}))
    rows = sweep(template, {"d": [4, 7], "h": [0.2, 0.1]}, tmp_path / "sweep", threads=2)
    assert [row["cell"] for row in rows] == [0, 1, 2, 3]
    assert [row["status"] for row in rows] == ["ok", "ok", "ScenarioError", "ScenarioError"]
    with session_scope(tmp_path / "sweep") as session:
        assert session.scalar(select(func.count()).select_from(SweepCell)) == 4
        failed = session.scalars(select(SweepCell).where(SweepCell.status != "ok")).all()
        assert {cell.d for cell in failed} == {7}
    summary = json.loads((tmp_path / "sweep" / "sweep.json").read_text())
    assert "d=4" in summary["convergence"]
    assert (tmp_path / "sweep" / "sweep.csv").read_text().startswith("cell,d,h,status")


def test_epsilon_axis_needs_power_tail(tmp_path):
    template = scenario_from_dict(scenario_dict(diagnostics={"requests": ["energy"]}))
    rows = sweep(template, {"epsilon": [0.5]}, tmp_path / "sweep")
    assert rows[0]["status"] == "ScenarioError"
    with pytest.raises(ScenarioError):
        sweep(template, {"width": [1.0]}, tmp_path / "other")


def test_parse_axis():
    assert parse_axis("h=0.04,0.02,0.01") == ("h", [0.04, 0.02, 0.01])
    assert parse_axis(" d = 3,4") == ("d", [3.0, 4.0])
    for bad in ("h", "width=1", "h=a,b"):
        with pytest.raises(ScenarioError):
            parse_axis(bad)


# -------------------- PLOTS --------------------
def test_plots_of_an_empty_directory(tmp_path):
    written, notes = emit_plots(tmp_path)
    assert written == []
    assert notes and "no diagnostics" in notes[0]


def test_plots_skip_empty_series(tmp_path):
    scenario = scenario_from_dict(scenario_dict(params={"d": 5, "p": 2.0, "zeta": 0}, diagnostics={"requests": ["energy"]}))
    run(scenario, tmp_path / "linear")
    written, notes = emit_plots(tmp_path / "linear")
    names = {path.name for path in written}
    assert {"energy_total.svg", "replot.py"} <= names
    assert any(note.startswith("morawetz_local") for note in notes)
    first = (tmp_path / "linear" / "plots" / "energy_total.svg").read_bytes()
    emit_plots(tmp_path / "linear")
    assert (tmp_path / "linear" / "plots" / "energy_total.svg").read_bytes() == first


# -------------------- PRESETS --------------------
PRESETS = Path(__file__).parent / "presets"


def preset(name, **grid):
    scenario = load_scenario(PRESETS / f"{name}.toml")
    if grid:
        scenario = scenario.model_copy(update={"grid": scenario.grid.model_copy(update=grid)})
    return scenario


def failed(result):
    return [(v.name, v.value, v.bound) for v in result.verdicts if not v.passed]


@pytest.mark.slow
def test_baseline_preset_passes(tmp_path):
    result = run(preset("baseline_d4"), tmp_path / "baseline")
    assert result.passed, failed(result)
    assert result.summary["results"]["flux"]["residual"] <= 1e-2 * result.summary["results"]["energy"]["initial"]


@pytest.mark.slow
def test_exterior_scattering_preset_passes(tmp_path):
    result = run(preset("exterior_scattering_d4"), tmp_path / "exterior")
    assert result.passed, failed(result)
    names = {v.name for v in result.verdicts}
    assert {"deficit_decay", "full_deficit_decay", "energy_gap", "middle_band_decay"} <= names
    split = result.summary["results"]["full_deficit"]["energy_split"]
    assert split["radiated_energy"] <= split["energy"] * (1 + 1e-3)


@pytest.mark.slow
def test_interior_decay_preset_decays(tmp_path):
    result = run(preset("interior_decay_d3", h=0.04), tmp_path / "interior")
    fit = result.summary["results"]["interior_decay"]["fit"]
    assert fit["exponent"] < 0
    assert fit["r2"] >= 0.8
    assert {v.name: v for v in result.verdicts}["interior_decay"].passed


@pytest.mark.slow
def test_random_pointwise_preset_passes(tmp_path):
    result = run(preset("random_pointwise_d6"), tmp_path / "random")
    assert result.passed, failed(result)
