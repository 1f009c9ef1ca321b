import numpy as np
import pytest

from grid_state import FieldState, RadialGrid
from params import ModelParams


def bump_prime(s):
    """F'(s) = s (1 - s²/4)^8 on |s| < 2, zero outside; odd with zero mass."""
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 2.0, s * np.clip(1.0 - s**2 / 4.0, 0.0, None) ** 8, 0.0)


def bump_primitive(s):
    """F(s) = -(2/9)(1 - s²/4)^9 on |s| < 2."""
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 2.0, -(2.0 / 9.0) * np.clip(1.0 - s**2 / 4.0, 0.0, None) ** 9, 0.0)


def free_wave_d3(r, t):
    """u = (F(t-r) - F(t+r)) / r, with the limit -2F'(t) at r = 0."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    pos = r > 0
    out[pos] = (bump_primitive(t - r[pos]) - bump_primitive(t + r[pos])) / r[pos]
    out[~pos] = -2.0 * bump_prime(t)
    return out


def closed_form_data(grid: RadialGrid) -> FieldState:
    """t = 0 data of the d = 3 wave above: u0 = 0, u1 = -2 (1 - r²/4)^8."""
    u1 = -2.0 * np.clip(1.0 - grid.r**2 / 4.0, 0.0, None) ** 8
    return FieldState(grid, 0.0, np.zeros_like(u1), u1)


def gaussian_state(grid: RadialGrid, amplitude=1.0, width=1.0, velocity=False) -> FieldState:
    profile = amplitude * np.exp(-((grid.r / width) ** 2))
    profile[-1] = 0.0
    zero = np.zeros_like(profile)
    return FieldState(grid, 0.0, zero, profile) if velocity else FieldState(grid, 0.0, profile, zero)


def compact_bump(grid: RadialGrid, amplitude=1.0, radius=2.0) -> FieldState:
    u = amplitude * np.clip(1.0 - (grid.r / radius) ** 2, 0.0, None) ** 4
    return FieldState(grid, 0.0, u, np.zeros_like(u))


@pytest.fixture
def d3_linear():
    return ModelParams(d=3, p=3.0, zeta=0)


@pytest.fixture
def d3_cubic():
    return ModelParams(d=3, p=3.0, zeta=-1)


@pytest.fixture
def d4_nonlinear():
    return ModelParams(d=4, p=7.0 / 3.0, zeta=-1)


@pytest.fixture
def d5_linear():
    return ModelParams(d=5, p=2.0, zeta=0)


@pytest.fixture
def coarse_grid():
    return RadialGrid.from_spacing(16.0, 0.05)
