"""Method-of-lines solver for the radial equation in physical variables.

    u_tt = r^{1-d} (r^{d-1} u_r)_r + ζ |u|^{p-1} u

Space: second-order finite volumes on shells centred at the nodes, so the
removable singularity at r = 0 needs no special case (the first shell is the
ball of radius h/2). Time: classic four-stage Runge-Kutta. Outer boundary:
homogeneous Dirichlet at r_max, which is exact as long as
r_max >= support + t_end + 2 (nothing reflected from the wall reaches a
measured region).
"""

import math
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

import config
from exceptions import DivergenceError, PreconditionError, DomainError
from grid_state import FieldState, RadialGrid, save_state, load_state
from params import ModelParams, require_valid, nonlinearity
from utils.io import write_json, read_json

logger = logging.getLogger(__name__)


class EvolutionConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    t_end: float = Field(gt=0)
    cfl: float = Field(0.25, gt=0, le=0.5)
    snapshot_stride: int = Field(1, ge=1)

    @classmethod
    def sampled(cls, t_end: float, h: float, every: float, cfl: float = 0.25) -> "EvolutionConfig":
        """Config whose snapshots are roughly ``every`` apart in time."""
        template = cls(t_end=t_end, cfl=cfl)
        nsteps, dt = template.plan(h)
        return cls(t_end=t_end, cfl=cfl, snapshot_stride=min(nsteps, max(1, round(every / dt))))

    def plan(self, h: float) -> tuple[int, float]:
        """Step count and the step, shrunk so that t_end is hit exactly."""
        nsteps = max(1, math.ceil(self.t_end / (self.cfl * h) - 1e-9))
        return nsteps, self.t_end / nsteps


@dataclass(eq=False)
class Trajectory:
    params: ModelParams
    grid: RadialGrid
    snapshots: list[FieldState]
    config: EvolutionConfig | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        times = self.times
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise PreconditionError("trajectory snapshot times must be strictly increasing")

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def first(self) -> FieldState:
        return self.snapshots[0]

    @property
    def last(self) -> FieldState:
        return self.snapshots[-1]

    def index_of(self, t: float, tol: float | None = None) -> int:
        times = self.times
        i = int(np.argmin(np.abs(times - t)))
        if tol is None:
            tol = 0.5 * float(np.min(np.diff(times))) if len(times) > 1 else 1e-9
        if abs(times[i] - t) > tol:
            raise DomainError(f"no snapshot near t={t:g} (closest {times[i]:g})")
        return i

    def at(self, t: float, tol: float | None = None) -> FieldState:
        return self.snapshots[self.index_of(t, tol)]

    def between(self, t_lo: float, t_hi: float) -> list[FieldState]:
        eps = 1e-9 * max(1.0, abs(t_hi))
        return [s for s in self.snapshots if t_lo - eps <= s.t <= t_hi + eps]


# -------------------- RIGHT HAND SIDE --------------------
class _Stencil:
    """Acceleration operator in flux form, coefficients precomputed.

    Node j owns the shell [r_j - h/2, r_j + h/2]; the Laplacian is the net
    flux r^{d-1} u_r through its faces over its volume. The operator is
    symmetric in the shell-volume inner product for every d, and reduces
    to 2d (u_1 - u_0)/h^2 at the origin.
    """

    def __init__(self, grid: RadialGrid, params: ModelParams):
        h = grid.h
        d = params.d
        r = grid.r[:-1]
        outer = r + 0.5 * h
        inner = np.maximum(r - 0.5 * h, 0.0)
        volume = (outer**d - inner**d) / d
        self.up = outer ** (d - 1) / (h * volume)
        self.down = inner ** (d - 1) / (h * volume)
        self.zeta = params.zeta
        self.p = params.p

    def __call__(self, u: np.ndarray) -> np.ndarray:
        acc = np.empty_like(u)
        du = np.diff(u)
        acc[:-1] = self.up * du
        acc[1:-1] -= self.down[1:] * du[:-1]
        if self.zeta:
            acc[:-1] += self.zeta * nonlinearity(u[:-1], self.p)
        acc[-1] = 0.0
        return acc


def rhs(state: FieldState, params: ModelParams) -> np.ndarray:
    """u_tt at every node; the Dirichlet node r_max is frozen (0)."""
    return _Stencil(state.grid, params)(state.u)


def _rk4(u, ut, dt, accel):
    k1u, k1v = ut, accel(u)
    k2u, k2v = ut + 0.5 * dt * k1v, accel(u + 0.5 * dt * k1u)
    k3u, k3v = ut + 0.5 * dt * k2v, accel(u + 0.5 * dt * k2u)
    k4u, k4v = ut + dt * k3v, accel(u + dt * k3u)
    u_new = u + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    ut_new = ut + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return u_new, ut_new


def divergence_guard(t: float, *profiles: np.ndarray, threshold: float | None = None) -> None:
    limit = config.DIVERGENCE_THRESHOLD if threshold is None else threshold
    for values in profiles:
        bad = ~(np.abs(values) <= limit)
        if bad.any():
            node = int(np.argmax(bad))
            logger.error("divergence at t=%.6g node %d", t, node)
            raise DivergenceError(t, node, float(abs(values[node])))


# -------------------- TIME INTEGRATION --------------------
def _integrate(start: FieldState, cfg: EvolutionConfig, params: ModelParams, direction: int) -> Trajectory:
    require_valid(params)
    if not start.is_finite():
        raise PreconditionError("initial state has non-finite entries")
    grid = start.grid
    nsteps, dt = cfg.plan(grid.h)
    accel = _Stencil(grid, params)
    u, ut = start.u.copy(), start.ut.copy()
    if u[-1] != 0.0 or ut[-1] != 0.0:
        logger.warning("data nonzero at r_max; imposing the Dirichlet value")
        u[-1] = ut[-1] = 0.0

    logger.info(
        "evolving d=%d p=%g zeta=%d: %d steps of %.3g (%s), n=%d",
        params.d, params.p, params.zeta, nsteps, dt, "backward" if direction < 0 else "forward", grid.n,
    )
    snapshots = [FieldState(grid, start.t, u.copy(), ut.copy())]
    step_dt = direction * dt
    for step in range(1, nsteps + 1):
        u, ut = _rk4(u, ut, step_dt, accel)
        u[-1] = ut[-1] = 0.0
        t = start.t + direction * step * dt
        divergence_guard(t, u, ut)
        if step % cfg.snapshot_stride == 0 or step == nsteps:
            snapshots.append(FieldState(grid, t, u.copy(), ut.copy()))

    if direction < 0:
        snapshots.reverse()
    provenance = {"solver": "fd", "direction": "backward" if direction < 0 else "forward", "dt": dt}
    return Trajectory(params, grid, snapshots, cfg, provenance)


def evolve(initial: FieldState, cfg: EvolutionConfig, params: ModelParams) -> Trajectory:
    return _integrate(initial, cfg, params, +1)


def evolve_backward(final: FieldState, cfg: EvolutionConfig, params: ModelParams) -> Trajectory:
    """Integrate toward earlier times; snapshots are still stored oldest first."""
    return _integrate(final, cfg, params, -1)


def evolve_both(initial: FieldState, cfg: EvolutionConfig, params: ModelParams) -> Trajectory:
    """Trajectory over [t0 - t_end, t0 + t_end] from data at t0."""
    past = evolve_backward(initial, cfg, params)
    future = evolve(initial, cfg, params)
    merged = past.snapshots[:-1] + future.snapshots
    return Trajectory(params, initial.grid, merged, cfg, {"solver": "fd", "direction": "both"})


# -------------------- EXPORT --------------------
def save_trajectory(traj: Trajectory, directory: str | Path, stride: int = 1) -> Path:
    directory = Path(directory)
    files = []
    for i, state in enumerate(traj.snapshots[::stride]):
        name = f"snapshot_{i:05d}.csv"
        save_state(state, traj.params, directory / name)
        files.append(name)
    index = {
        "times": [s.t for s in traj.snapshots[::stride]],
        "files": files,
        "params": traj.params.model_dump(),
        "grid": traj.grid.to_dict(),
        "config": traj.config.model_dump() if traj.config else None,
        "provenance": traj.provenance,
        "code_version": config.CODE_VERSION,
    }
    return write_json(directory / "index.json", index)


def load_trajectory(directory: str | Path) -> Trajectory:
    directory = Path(directory)
    index = read_json(directory / "index.json")
    snapshots = [load_state(directory / name)[0] for name in index["files"]]
    params = ModelParams(**index["params"])
    cfg = EvolutionConfig(**index["config"]) if index.get("config") else None
    return Trajectory(params, snapshots[0].grid, snapshots, cfg, index.get("provenance", {}))
