import numpy as np
import pytest
from scipy.integrate import quad, trapezoid

from conftest import compact_bump, gaussian_state
from exceptions import GridError, PreconditionError
from grid_state import (
    FieldState,
    RadialGrid,
    ReducedState,
    energy,
    energy_norm_sq,
    extend_state,
    from_reduced,
    l2_identity_residual,
    l_operator,
    load_state,
    local_energy,
    reduced_energy_identity,
    save_state,
    to_reduced,
    weighted_energy,
)
from params import ModelParams, derive_constants


# -------------------- MESH --------------------
def test_grid_rejects_too_few_cells():
    with pytest.raises(GridError):
        RadialGrid.from_spacing(1.0, 0.1)


def test_grid_includes_origin_and_uniform_spacing():
    grid = RadialGrid.from_spacing(4.0, 0.25)
    assert grid.r[0] == 0.0
    assert grid.r[-1] == pytest.approx(4.0)
    assert np.allclose(np.diff(grid.r), 0.25)


def test_profile_length_is_checked():
    grid = RadialGrid.from_spacing(4.0, 0.25)
    with pytest.raises(GridError):
        FieldState(grid, 0.0, np.zeros(5), np.zeros(grid.n + 1))


def test_extend_state_zero_pads():
    grid = RadialGrid.from_spacing(4.0, 0.25)
    state = compact_bump(grid, radius=2.0)
    longer = extend_state(state, 8.0)
    assert longer.grid.n == 32
    assert np.array_equal(longer.u[: grid.n + 1], state.u)
    assert not longer.u[grid.n + 1:].any()


# -------------------- TRANSFORMS --------------------
def test_zero_state_reduces_to_zero():
    params = ModelParams(d=4, p=7.0 / 3.0)
    red = to_reduced(FieldState.zeros(RadialGrid.from_spacing(4.0, 0.1)), params)
    assert not red.w.any() and not red.v_plus.any() and not red.v_minus.any()


def test_d3_reduced_variable_is_r_times_u():
    params = ModelParams(d=3, p=3.0)
    grid = RadialGrid.from_spacing(6.0, 0.05)
    state = gaussian_state(grid)
    assert np.array_equal(to_reduced(state, params).w, grid.r * state.u)


def test_static_state_characteristics_are_opposite():
    params = ModelParams(d=5, p=2.0)
    red = to_reduced(gaussian_state(RadialGrid.from_spacing(6.0, 0.05)), params)
    assert np.array_equal(red.v_plus, -red.v_minus)
    assert np.array_equal(red.v_minus, red.wr)


def test_origin_invariant_holds_after_reduction():
    for d, p in [(3, 3.0), (4, 2.5), (5, 2.0), (6, 1.9)]:
        params = ModelParams(d=d, p=p)
        red = to_reduced(gaussian_state(RadialGrid.from_spacing(6.0, 0.05), velocity=True), params)
        assert red.w[0] == 0.0
        assert red.v_plus[0] + red.v_minus[0] == 0.0


def test_round_trip_is_identity_away_from_origin():
    params = ModelParams(d=5, p=2.0)
    grid = RadialGrid.from_spacing(8.0, 0.01)
    profile = np.exp(-grid.r**2)
    profile[-1] = 0.0
    state = FieldState(grid, 0.0, profile, 0.5 * profile)
    back = from_reduced(to_reduced(state, params), params)
    np.testing.assert_allclose(back.u[1:-1], state.u[1:-1], rtol=1e-12, atol=0.0)
    np.testing.assert_allclose(back.ut[1:-1], state.ut[1:-1], rtol=1e-12, atol=0.0)


def test_from_reduced_power_profile_d4():
    params = ModelParams(d=4, p=2.5)
    grid = RadialGrid.from_spacing(4.0, 0.1)
    w = grid.r**1.5
    wr = 1.5 * grid.r**0.5
    state = from_reduced(ReducedState(grid, 0.0, w, -wr, wr), params)
    np.testing.assert_allclose(state.u, 1.0, rtol=1e-13)
    assert not state.ut.any()


def test_from_reduced_rejects_broken_origin():
    params = ModelParams(d=3, p=3.0)
    grid = RadialGrid.from_spacing(4.0, 0.1)
    red = ReducedState.zeros(grid)
    red.w[0] = 1.0
    with pytest.raises(GridError):
        from_reduced(red, params)


def test_l_operator_of_constant_in_d3():
    params = ModelParams(d=3, p=3.0)
    grid = RadialGrid.from_spacing(4.0, 0.1)
    state = FieldState(grid, 0.0, np.full(grid.n + 1, 2.0), np.zeros(grid.n + 1))
    np.testing.assert_allclose(l_operator(state, params)[1:], 2.0 / grid.r[1:], rtol=1e-13)


def test_characteristic_energy_identity_is_nodewise():
    params = ModelParams(d=4, p=7.0 / 3.0)
    grid = RadialGrid.from_spacing(8.0, 0.02)
    base = gaussian_state(grid)
    state = FieldState(grid, 0.0, base.u, -0.3 * base.u)
    red = to_reduced(state, params)
    lu = l_operator(state, params)
    r = grid.r[1:]
    lhs = red.v_plus[1:] ** 2 + red.v_minus[1:] ** 2
    rhs = 2.0 * r ** (params.d - 1) * (lu[1:] ** 2 + state.ut[1:] ** 2)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-11, atol=1e-300)


# -------------------- ENERGIES --------------------
def test_zero_state_has_zero_energy():
    params = ModelParams(d=3, p=3.0)
    zero = FieldState.zeros(RadialGrid.from_spacing(4.0, 0.1))
    assert energy(zero, params) == 0.0
    assert weighted_energy(zero, 0.5, params) == 0.0


def test_energy_matches_quadrature_oracle_d3():
    params = ModelParams(d=3, p=3.0)
    grid = RadialGrid.from_spacing(12.0, 5e-4)
    state = gaussian_state(grid)

    def density(r):
        ur = -2.0 * r * np.exp(-(r**2))
        return (0.5 * ur**2 + 0.25 * np.exp(-4.0 * r**2)) * r**2

    oracle = 4.0 * np.pi * quad(density, 0.0, 12.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    assert energy(state, params) == pytest.approx(oracle, rel=1e-6)


def test_kinetic_only_energy_is_half_l2_norm():
    params = ModelParams(d=5, p=2.0, zeta=0)
    grid = RadialGrid.from_spacing(8.0, 0.01)
    state = gaussian_state(grid, velocity=True)
    c_d = derive_constants(params).c_d
    l2 = c_d * trapezoid(state.ut**2 * grid.r**4, dx=grid.h)
    assert energy(state, params) == pytest.approx(0.5 * l2, rel=1e-13)


def test_weighted_energy_kappa_zero_is_twice_energy():
    params = ModelParams(d=4, p=7.0 / 3.0)
    state = gaussian_state(RadialGrid.from_spacing(8.0, 0.01))
    assert weighted_energy(state, 0.0, params) == pytest.approx(2.0 * energy(state, params), rel=1e-14)


def test_weighted_energy_matches_quadrature_oracle_d4():
    params = ModelParams(d=4, p=7.0 / 3.0)
    grid = RadialGrid.from_spacing(12.0, 5e-4)
    state = gaussian_state(grid)
    c_d = derive_constants(params).c_d
    p = params.p

    def density(r):
        u = np.exp(-(r**2))
        ur = -2.0 * r * u
        return (1.0 + np.sqrt(r)) * (0.5 * ur**2 + u ** (p + 1) / (p + 1)) * r**3

    oracle = c_d * quad(density, 0.0, 12.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    assert weighted_energy(state, 0.5, params) == pytest.approx(oracle, rel=1e-6)


def test_weighted_energy_grows_with_kappa_outside_unit_ball():
    params = ModelParams(d=3, p=3.0)
    grid = RadialGrid.from_spacing(12.0, 0.01)
    u = np.exp(-((grid.r - 5.0) ** 2))
    u[grid.r < 1.5] = 0.0
    state = FieldState(grid, 0.0, u, np.zeros_like(u))
    values = [weighted_energy(state, kappa, params) for kappa in (0.0, 0.25, 0.5, 1.0)]
    assert np.all(np.diff(values) >= 0)


def test_negative_kappa_rejected():
    params = ModelParams(d=3, p=3.0)
    with pytest.raises(PreconditionError):
        weighted_energy(FieldState.zeros(RadialGrid.from_spacing(4.0, 0.1)), -0.1, params)


def test_local_energy_is_additive():
    params = ModelParams(d=4, p=7.0 / 3.0)
    grid = RadialGrid.from_spacing(10.0, 0.01)
    state = gaussian_state(grid)
    whole = local_energy(state, 0.0, grid.r_max, params)
    assert whole == pytest.approx(energy(state, params), rel=1e-12)
    split = local_energy(state, 0.0, 1.0, params) + local_energy(state, 1.0, grid.r_max, params)
    assert split == pytest.approx(whole, rel=1e-12)


def test_local_energy_vanishes_beyond_support():
    params = ModelParams(d=4, p=7.0 / 3.0)
    grid = RadialGrid.from_spacing(10.0, 0.01)
    assert local_energy(compact_bump(grid, radius=2.0), 3.0, 6.0, params) == pytest.approx(0.0, abs=1e-15)


# -------------------- IDENTITIES --------------------
def test_l2_identity_of_zero_state():
    params = ModelParams(d=5, p=2.0)
    assert l2_identity_residual(FieldState.zeros(RadialGrid.from_spacing(4.0, 0.1)), params) == (0.0, 0.0)


def test_l2_identity_d5_gaussian():
    params = ModelParams(d=5, p=2.0)
    lhs, rhs = l2_identity_residual(gaussian_state(RadialGrid.from_spacing(12.0, 1e-3)), params)
    assert abs(lhs - rhs) / rhs <= 1e-4


def test_l2_identity_converges_at_second_order_d3():
    params = ModelParams(d=3, p=3.0)
    gaps = []
    for h in (0.04, 0.02, 0.01):
        lhs, rhs = l2_identity_residual(compact_bump(RadialGrid.from_spacing(6.0, h)), params)
        gaps.append(abs(lhs / rhs - 1.0))
    assert gaps[0] > gaps[1] > gaps[2]
    assert np.log2(gaps[1] / gaps[2]) >= 1.8


def test_reduced_energy_identity_d4():
    params = ModelParams(d=4, p=7.0 / 3.0)
    base = gaussian_state(RadialGrid.from_spacing(10.0, 0.005))
    state = FieldState(base.grid, 0.0, base.u, 0.5 * base.u)
    lhs, rhs = reduced_energy_identity(state, params)
    assert lhs == pytest.approx(rhs, rel=1e-3)
    assert lhs == pytest.approx(energy_norm_sq(state, params))


def test_state_survives_csv(tmp_path):
    params = ModelParams(d=4, p=7.0 / 3.0)
    state = gaussian_state(RadialGrid.from_spacing(4.0, 0.1))
    path = save_state(state, params, tmp_path / "state.csv")
    loaded, loaded_params = load_state(path)
    assert loaded_params == params
    assert np.array_equal(loaded.u, state.u)
    assert loaded.grid == state.grid
