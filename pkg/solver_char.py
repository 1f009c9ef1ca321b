"""Characteristic-mesh solver for the reduced system.

With w = r^k u and v± = w_t ∓ w_r the radial equation becomes

    (∂t + ∂r) v+ = f,   (∂t - ∂r) v- = f,   w_t = (v+ + v-)/2

with f = -λ_d w/r² + ζ sign(w)|w|^p / r^{(p-1)k}. Taking dt = h puts the
characteristics on the mesh diagonals: v+ moves one node outward per step and
v- one node inward, each picking up h times the source at the midpoint of the
cell it crosses.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

import config
from exceptions import ConsistencyError, DomainError, PreconditionError
from grid_state import FieldState, RadialGrid, ReducedState, from_reduced, save_reduced, to_reduced
from params import ModelParams, derive_constants, require_valid
from solver_fd import Trajectory, divergence_guard
from utils.io import write_json

logger = logging.getLogger(__name__)

RECONCILE_EVERY = 100
RECONCILE_TOLERANCE = 1e-2


def source_term(r, w, params: ModelParams):
    """f(r, w) for r > 0; vectorised over numpy arrays."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("source term is only defined for r > 0")
    lam = derive_constants(params).lambda_d
    f = -lam * w / r**2
    if params.zeta:
        f = f + params.zeta * np.sign(w) * np.abs(w) ** params.p / r ** ((params.p - 1) * params.k)
    return f


def _origin_cell_average(w1: float, w2: float, h: float, params: ModelParams, lam: float) -> float:
    """Mean of f over [0, h] for w = a r^k, a fitted to the nodes h and 2h."""
    k = params.k
    a = (w1 * h**k + w2 * (2 * h) ** k) / (h ** (2 * k) + (2 * h) ** (2 * k))
    mean = 0.0
    if lam:
        mean -= lam * a * h ** (k - 2) / (k - 1)
    if params.zeta:
        mean += params.zeta * np.sign(a) * abs(a) ** params.p * h**k / (k + 1)
    return float(mean)


class _CellSource:
    """Cell-averaged source f at r_{j+1/2} from a nodal w profile."""

    def __init__(self, grid: RadialGrid, params: ModelParams):
        self.params = params
        self.h = grid.h
        self.lam = derive_constants(params).lambda_d
        mid = grid.r[:-1] + 0.5 * grid.h
        self.inv_r2 = 1.0 / mid[1:] ** 2
        self.inv_rp = 1.0 / mid[1:] ** ((params.p - 1) * params.k)

    def __call__(self, w: np.ndarray) -> np.ndarray:
        w_mid = 0.5 * (w[:-1] + w[1:])
        f = np.empty_like(w_mid)
        inner = w_mid[1:]
        f[1:] = -self.lam * inner * self.inv_r2
        if self.params.zeta:
            f[1:] += self.params.zeta * np.sign(inner) * np.abs(inner) ** self.params.p * self.inv_rp
        f[0] = _origin_cell_average(w[1], w[2], self.h, self.params, self.lam)
        return f


def _transport(v_plus, v_minus, cell_f, h):
    new_plus = np.empty_like(v_plus)
    new_minus = np.empty_like(v_minus)
    new_plus[1:] = v_plus[:-1] + h * cell_f
    new_minus[:-1] = v_minus[1:] + h * cell_f
    new_minus[-1] = 0.0
    new_plus[0] = -new_minus[0]
    return new_plus, new_minus


def _advance(w, v_plus, v_minus, source: _CellSource, h):
    wt = 0.5 * (v_plus + v_minus)
    # predictor: source frozen at the old w
    p_plus, p_minus = _transport(v_plus, v_minus, source(w), h)
    w_pred = w + 0.5 * h * (wt + 0.5 * (p_plus + p_minus))
    # corrector: source at the half-step w
    new_plus, new_minus = _transport(v_plus, v_minus, source(0.5 * (w + w_pred)), h)
    new_wt = 0.5 * (new_plus + new_minus)
    increment = 0.5 * h * (wt + new_wt)
    new_w = w + increment
    new_w[0] = 0.0
    return new_w, new_plus, new_minus, increment


def spatial_w(v_plus: np.ndarray, v_minus: np.ndarray, h: float) -> np.ndarray:
    """w rebuilt from w_r = (v- - v+)/2 with w(0) = 0."""
    return cumulative_trapezoid(0.5 * (v_minus - v_plus), dx=h, initial=0.0)


def char_step(state: ReducedState, params: ModelParams) -> ReducedState:
    """One step of length dt = h."""
    h = state.grid.h
    w, v_plus, v_minus, _ = _advance(state.w, state.v_plus, state.v_minus, _CellSource(state.grid, params), h)
    return ReducedState(state.grid, state.t + h, w, v_plus, v_minus)


@dataclass(eq=False)
class ReducedTrajectory:
    params: ModelParams
    grid: RadialGrid
    snapshots: list[ReducedState]
    provenance: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def last(self) -> ReducedState:
        return self.snapshots[-1]

    def at(self, t: float) -> ReducedState:
        times = self.times
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > 0.5 * self.grid.h:
            raise DomainError(f"no reduced snapshot near t={t:g}")
        return self.snapshots[i]

    def to_field(self) -> Trajectory:
        fields = [from_reduced(s, self.params) for s in self.snapshots]
        return Trajectory(self.params, self.grid, fields, None, dict(self.provenance))


def evolve_char(
    initial: ReducedState | FieldState,
    t_end: float,
    params: ModelParams,
    snapshot_stride: int = 1,
) -> ReducedTrajectory:
    """March ``char_step`` for ceil(t_end / h) steps from ``initial``.

    Every RECONCILE_EVERY steps the time-integrated w is checked against
    ∫_0^r (v- - v+)/2, which the diagonal transport keeps equal to w up to
    quadrature error.
    """
    require_valid(params)
    if isinstance(initial, FieldState):
        initial = to_reduced(initial, params)
    if not initial.is_finite():
        raise PreconditionError("initial reduced state has non-finite entries")
    if t_end <= 0 or snapshot_stride < 1:
        raise PreconditionError(f"need t_end > 0 and stride >= 1, got {t_end}, {snapshot_stride}")

    grid = initial.grid
    h = grid.h
    nsteps = max(1, int(np.ceil(t_end / h - 1e-9)))
    source = _CellSource(grid, params)
    w, v_plus, v_minus = initial.w.copy(), initial.v_plus.copy(), initial.v_minus.copy()
    w[0] = 0.0
    v_minus[-1] = 0.0
    v_plus[0] = -v_minus[0]

    logger.info("characteristic run d=%d p=%g zeta=%d: %d steps, h=%.3g", params.d, params.p, params.zeta, nsteps, h)
    snapshots = [ReducedState(grid, initial.t, w.copy(), v_plus.copy(), v_minus.copy())]
    for step in range(1, nsteps + 1):
        w, v_plus, v_minus, _ = _advance(w, v_plus, v_minus, source, h)
        t = initial.t + step * h

        divergence_guard(t, w, v_plus, v_minus)
        if step % RECONCILE_EVERY == 0:
            drift = float(np.max(np.abs(w - spatial_w(v_plus, v_minus, h))))
            scale = float(np.max(np.abs(w)))
            if drift > RECONCILE_TOLERANCE * scale and drift > 1e-14:
                logger.error("w drifted by %.3e at t=%.6g", drift, t)
                raise ConsistencyError(f"reduced w drifted from ∫w_r by {drift:.3e} at t={t:.6g}")
        if step % snapshot_stride == 0 or step == nsteps:
            snapshots.append(ReducedState(grid, t, w.copy(), v_plus.copy(), v_minus.copy()))

    return ReducedTrajectory(params, grid, snapshots, {"solver": "char", "dt": h})


def save_reduced_trajectory(traj: ReducedTrajectory, directory: str | Path) -> Path:
    """One r,w,v_plus,v_minus CSV per snapshot plus an index.json."""
    directory = Path(directory)
    files = []
    for i, state in enumerate(traj.snapshots):
        name = f"reduced_{i:05d}.csv"
        save_reduced(state, traj.params, directory / name)
        files.append(name)
    index = {
        "times": [float(s.t) for s in traj.snapshots],
        "files": files,
        "params": traj.params.model_dump(),
        "grid": traj.grid.to_dict(),
        "provenance": traj.provenance,
        "code_version": config.CODE_VERSION,
    }
    return write_json(directory / "index.json", index)


# -------------------- ALONG ONE CHARACTERISTIC --------------------
class CharacteristicTrace(NamedTuple):
    v_start: float
    v_end: float
    integral: float

    @property
    def residual(self) -> float:
        return abs(self.v_end - self.v_start - self.integral)


def _reduced_snapshots(source, params: ModelParams) -> list[ReducedState]:
    if isinstance(source, ReducedTrajectory):
        return source.snapshots
    return [to_reduced(s, params) for s in source.snapshots]


def trace_characteristic(
    source: Trajectory | ReducedTrajectory,
    eta: float,
    t1: float,
    t2: float,
    params: ModelParams,
    direction: str = "plus",
) -> CharacteristicTrace:
    """Follow v+ along t - r = eta (or v- along t + r = eta) from t1 to t2.

    Endpoint values and the trapezoid integral of f are sampled on the
    snapshots inside [t1, t2] with linear interpolation in r.
    """
    if direction not in ("plus", "minus"):
        raise PreconditionError(f"direction must be 'plus' or 'minus', got {direction!r}")
    if not t1 < t2:
        raise PreconditionError(f"need t1 < t2, got {t1}, {t2}")
    grid = source.grid
    eps = 1e-9 * max(1.0, abs(t2))
    window = [s for s in _reduced_snapshots(source, params) if t1 - eps <= s.t <= t2 + eps]
    if len(window) < 2:
        raise DomainError(f"fewer than two snapshots in [{t1:g}, {t2:g}]")

    times = np.array([s.t for s in window])
    radii = times - eta if direction == "plus" else eta - times
    if radii.min() <= 0 or radii.max() > grid.r_max:
        raise DomainError(
            f"characteristic through eta={eta:g} leaves (0, {grid.r_max:g}] on [{times[0]:g}, {times[-1]:g}]"
        )
    values = np.empty_like(times)
    forcing = np.empty_like(times)
    for i, (state, r) in enumerate(zip(window, radii)):
        v = state.v_plus if direction == "plus" else state.v_minus
        values[i] = np.interp(r, grid.r, v)
        forcing[i] = source_term(r, np.interp(r, grid.r, state.w), params)

    # v- moves against t; d/dt v-(eta - t, t) = f as well
    integral = float(trapezoid(forcing, times))
    return CharacteristicTrace(float(values[0]), float(values[-1]), integral)
