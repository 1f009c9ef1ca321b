"""Radial meshes, field snapshots, the u <-> (w, v+, v-) transforms and the
quadrature-based norms and energies.

Every radial integral is ``c_d * ∫ f(r) r^{d-1} dr`` evaluated with the
composite trapezoid rule on the uniform mesh ``r_j = j h``. Radial derivatives
are second order: centered inside, one-sided at both ends.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid, cumulative_trapezoid

from exceptions import GridError, PreconditionError
from params import ModelParams, derive_constants
from utils.io import write_table, read_table

logger = logging.getLogger(__name__)

MIN_NODES = 16


# -------------------- MESH AND SNAPSHOTS --------------------
@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n: int

    def __post_init__(self):
        if not self.r_max > 0:
            raise GridError(f"r_max must be positive, got {self.r_max}")
        if self.n < MIN_NODES:
            raise GridError(f"grid needs at least {MIN_NODES} cells, got n={self.n}")

    @classmethod
    def from_spacing(cls, r_max: float, h: float) -> "RadialGrid":
        if not h > 0:
            raise GridError(f"spacing must be positive, got h={h}")
        n = int(round(r_max / h))
        return cls(r_max=n * h, n=n)

    @property
    def h(self) -> float:
        return self.r_max / self.n

    @cached_property
    def r(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n + 1)

    def to_dict(self) -> dict:
        return {"r_max": self.r_max, "n": self.n, "h": self.h}


def _as_profile(values, grid: RadialGrid, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    if array.shape != (grid.n + 1,):
        raise GridError(f"{name} has shape {array.shape}, expected ({grid.n + 1},)")
    return array


@dataclass(frozen=True, eq=False)
class FieldState:
    grid: RadialGrid
    t: float
    u: np.ndarray
    ut: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", _as_profile(self.u, self.grid, "u"))
        object.__setattr__(self, "ut", _as_profile(self.ut, self.grid, "ut"))

    @classmethod
    def zeros(cls, grid: RadialGrid, t: float = 0.0) -> "FieldState":
        return cls(grid, t, np.zeros(grid.n + 1), np.zeros(grid.n + 1))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.ut).all())


def extend_state(state: FieldState, r_max: float) -> FieldState:
    """Zero-pad ``state`` onto a longer mesh with the same spacing."""
    grid = RadialGrid.from_spacing(r_max, state.grid.h)
    if grid.n <= state.grid.n:
        return state
    u = np.zeros(grid.n + 1)
    ut = np.zeros(grid.n + 1)
    u[: state.grid.n + 1] = state.u
    ut[: state.grid.n + 1] = state.ut
    return FieldState(grid, state.t, u, ut)


@dataclass(frozen=True, eq=False)
class ReducedState:
    grid: RadialGrid
    t: float
    w: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray

    def __post_init__(self):
        for name in ("w", "v_plus", "v_minus"):
            object.__setattr__(self, name, _as_profile(getattr(self, name), self.grid, name))

    @classmethod
    def zeros(cls, grid: RadialGrid, t: float = 0.0) -> "ReducedState":
        zero = np.zeros(grid.n + 1)
        return cls(grid, t, zero, zero.copy(), zero.copy())

    @property
    def wt(self) -> np.ndarray:
        return 0.5 * (self.v_plus + self.v_minus)

    @property
    def wr(self) -> np.ndarray:
        return 0.5 * (self.v_minus - self.v_plus)

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.w).all()
            and np.isfinite(self.v_plus).all()
            and np.isfinite(self.v_minus).all()
        )


# -------------------- DERIVATIVES AND TRANSFORMS --------------------
def radial_derivative(f: np.ndarray, h: float) -> np.ndarray:
    return np.gradient(f, h, edge_order=2)


def reduced_radial_derivative(state: FieldState, params: ModelParams) -> np.ndarray:
    """w_r = r^k u_r + k r^{k-1} u, which is r^k (L u) away from the origin.

    At r = 0 this gives u(0) for d = 3 and 0 for d >= 4.
    """
    k = params.k
    r = state.grid.r
    ur = radial_derivative(state.u, state.grid.h)
    return r**k * ur + k * r ** (k - 1) * state.u


def to_reduced(state: FieldState, params: ModelParams) -> ReducedState:
    weight = state.grid.r ** params.k
    w = weight * state.u
    wt = weight * state.ut
    wr = reduced_radial_derivative(state, params)
    return ReducedState(state.grid, state.t, w, wt - wr, wt + wr)


def from_reduced(red: ReducedState, params: ModelParams) -> FieldState:
    scale = max(1.0, float(np.abs(red.w).max()), float(np.abs(red.v_plus).max()))
    if abs(red.w[0]) > 1e-12 * scale or abs(red.v_plus[0] + red.v_minus[0]) > 1e-12 * scale:
        raise GridError(
            f"origin invariant violated: w(0)={red.w[0]:.3e}, "
            f"v_plus(0)+v_minus(0)={red.v_plus[0] + red.v_minus[0]:.3e}"
        )
    r = red.grid.r
    weight = r[1:] ** params.k
    u = np.empty_like(red.w)
    ut = np.empty_like(red.w)
    u[1:] = red.w[1:] / weight
    ut[1:] = red.wt[1:] / weight
    # u is even in r: quadratic through r = h, 2h, 3h
    u[0] = 3.0 * u[1] - 3.0 * u[2] + u[3]
    ut[0] = 3.0 * ut[1] - 3.0 * ut[2] + ut[3]
    return FieldState(red.grid, red.t, u, ut)


def l_operator(state: FieldState, params: ModelParams) -> np.ndarray:
    """(L u) = u_r + ((d-1)/2) u / r at r > 0.

    The origin entry is set to 0; every weighted integral of L u goes through
    ``reduced_radial_derivative`` instead, which is regular there.
    """
    r = state.grid.r
    lu = np.zeros_like(state.u)
    lu[1:] = reduced_radial_derivative(state, params)[1:] / r[1:] ** params.k
    return lu


# -------------------- QUADRATURE --------------------
def radial_integral(f: np.ndarray, grid: RadialGrid, params: ModelParams) -> float:
    c_d = derive_constants(params).c_d
    return c_d * float(trapezoid(f * grid.r ** (params.d - 1), dx=grid.h))


def cumulative_radial_integral(f: np.ndarray, grid: RadialGrid, params: ModelParams) -> np.ndarray:
    """F(r_j) = c_d ∫_0^{r_j} f r^{d-1} dr; linear in r between nodes."""
    c_d = derive_constants(params).c_d
    return c_d * cumulative_trapezoid(f * grid.r ** (params.d - 1), dx=grid.h, initial=0.0)


def interval(cumulative: np.ndarray, grid: RadialGrid, r_lo: float, r_hi: float) -> float:
    lo, hi = np.clip([r_lo, r_hi], 0.0, grid.r_max)
    if hi <= lo:
        return 0.0
    return float(np.interp(hi, grid.r, cumulative) - np.interp(lo, grid.r, cumulative))


def energy_density(state: FieldState, params: ModelParams, with_potential: bool | None = None) -> np.ndarray:
    """½u_r² + ½u_t² - ζ/(p+1)|u|^{p+1}; the potential is dropped for ζ = 0."""
    ur = radial_derivative(state.u, state.grid.h)
    density = 0.5 * ur**2 + 0.5 * state.ut**2
    include = (params.zeta != 0) if with_potential is None else with_potential
    if include:
        density = density + np.abs(state.u) ** (params.p + 1) / (params.p + 1)
    return density


def energy(state: FieldState, params: ModelParams) -> float:
    return radial_integral(energy_density(state, params), state.grid, params)


def weighted_energy(state: FieldState, kappa: float, params: ModelParams) -> float:
    """E_κ with the literal weight (1 + |x|^κ); κ = 0 gives 2E."""
    if kappa < 0:
        raise PreconditionError(f"kappa must be nonnegative, got {kappa}")
    weight = 1.0 + state.grid.r**kappa
    return radial_integral(weight * energy_density(state, params), state.grid, params)


def exterior_weighted_energy(state: FieldState, kappa: float, r: float, params: ModelParams) -> float:
    if kappa < 0:
        raise PreconditionError(f"kappa must be nonnegative, got {kappa}")
    weight = 1.0 + state.grid.r**kappa
    cumulative = cumulative_radial_integral(weight * energy_density(state, params), state.grid, params)
    return interval(cumulative, state.grid, r, state.grid.r_max)


def local_energy(state: FieldState, r_lo: float, r_hi: float, params: ModelParams) -> float:
    if not 0 <= r_lo < r_hi:
        raise PreconditionError(f"need 0 <= r_lo < r_hi, got ({r_lo}, {r_hi})")
    cumulative = cumulative_radial_integral(energy_density(state, params), state.grid, params)
    return interval(cumulative, state.grid, r_lo, r_hi)


def energy_norm_sq(state: FieldState, params: ModelParams) -> float:
    """‖(u, u_t)‖²_{Ḣ¹×L²}."""
    return 2.0 * radial_integral(energy_density(state, params, with_potential=False), state.grid, params)


def hdot1_norm(state: FieldState, params: ModelParams) -> float:
    ur = radial_derivative(state.u, state.grid.h)
    return float(np.sqrt(radial_integral(ur**2, state.grid, params)))


def lebesgue_norm(state: FieldState, q: float, params: ModelParams) -> float:
    return float(radial_integral(np.abs(state.u) ** q, state.grid, params) ** (1.0 / q))


def potential_integral(state: FieldState, params: ModelParams) -> float:
    """∫ |u|^{p+1} dx."""
    return radial_integral(np.abs(state.u) ** (params.p + 1), state.grid, params)


def hardy_integral(state: FieldState, params: ModelParams) -> float:
    """∫ |u|²/|x|² dx = c_d ∫ u² r^{d-3} dr."""
    c_d = derive_constants(params).c_d
    r = state.grid.r
    return c_d * float(trapezoid(state.u**2 * r ** (params.d - 3), dx=state.grid.h))


def l2_identity_residual(state: FieldState, params: ModelParams) -> tuple[float, float]:
    """Both sides of ∫(|Lu|² + λ_d|u|²/|x|²) dx = ∫|u_r|² dx."""
    consts = derive_constants(params)
    r, h = state.grid.r, state.grid.h
    wr = reduced_radial_derivative(state, params)
    lhs = consts.c_d * float(trapezoid(wr**2 + consts.lambda_d * state.u**2 * r ** (params.d - 3), dx=h))
    ur = radial_derivative(state.u, h)
    rhs = radial_integral(ur**2, state.grid, params)
    return lhs, rhs


def reduced_energy_identity(state: FieldState, params: ModelParams) -> tuple[float, float]:
    """∫(|∇u|²+|u_t|²)dx against λ_d∫|u|²/|x|²dx + (c_d/2)∫(v₊²+v₋²)dr."""
    consts = derive_constants(params)
    red = to_reduced(state, params)
    lhs = energy_norm_sq(state, params)
    rhs = consts.lambda_d * hardy_integral(state, params) + 0.5 * consts.c_d * float(
        trapezoid(red.v_plus**2 + red.v_minus**2, dx=state.grid.h)
    )
    return lhs, rhs


# -------------------- SERIALISATION --------------------
def save_state(state: FieldState, params: ModelParams, path: str | Path) -> Path:
    header = {"t": state.t, "params": params.model_dump(), "grid": state.grid.to_dict()}
    return write_table(path, header, {"r": state.grid.r, "u": state.u, "ut": state.ut})


def load_state(path: str | Path) -> tuple[FieldState, ModelParams]:
    header, columns = read_table(path)
    grid = RadialGrid(r_max=header["grid"]["r_max"], n=header["grid"]["n"])
    params = ModelParams(**header["params"])
    return FieldState(grid, float(header["t"]), columns["u"], columns["ut"]), params


def save_reduced(red: ReducedState, params: ModelParams, path: str | Path) -> Path:
    header = {"t": red.t, "params": params.model_dump(), "grid": red.grid.to_dict()}
    columns = {"r": red.grid.r, "w": red.w, "v_plus": red.v_plus, "v_minus": red.v_minus}
    return write_table(path, header, columns)
