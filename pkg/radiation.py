"""Radiation profiles: extraction of g from a run, the free wave built from a
prescribed profile, and the isometry / round-trip checks of the map from
free-wave data to its radiation profile.
"""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid, cumulative_trapezoid

from exceptions import DomainError, PreconditionError
from grid_state import (
    FieldState,
    RadialGrid,
    energy_norm_sq,
    extend_state,
    interval,
    radial_derivative,
    to_reduced,
)
from params import ModelParams, derive_constants, require_valid
from solver_char import ReducedTrajectory
from solver_fd import EvolutionConfig, Trajectory, evolve, evolve_backward
from utils.io import write_table, read_table

logger = logging.getLogger(__name__)

TAPER_WIDTH = 1.0
MIN_EXTRACTION_RADIUS = 1.0


def smooth_ramp(x):
    """Cubic 3x² - 2x³ clipped to [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


@dataclass(frozen=True, eq=False)
class RadiationProfile:
    eta: np.ndarray
    g: np.ndarray
    quality: np.ndarray
    t_extract: float
    params: ModelParams
    direction: str = "plus"

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim != 1 or len(eta) < 2 or not np.all(np.diff(eta) > 0):
            raise PreconditionError("eta grid must be strictly increasing with at least two nodes")
        for name in ("g", "quality"):
            values = np.asarray(getattr(self, name), dtype=float)
            if values.shape != eta.shape:
                raise PreconditionError(f"{name} has shape {values.shape}, expected {eta.shape}")
            if not np.isfinite(values).all():
                raise PreconditionError(f"{name} has non-finite entries")
            object.__setattr__(self, name, values)
        object.__setattr__(self, "eta", eta)

    @property
    def spacing(self) -> float:
        return float(self.eta[1] - self.eta[0])

    @property
    def support_radius(self) -> float:
        return float(max(abs(self.eta[0]), abs(self.eta[-1])))

    def norm_sq(self) -> float:
        return float(trapezoid(self.g**2, self.eta))

    def mass(self) -> float:
        """∫ g dη."""
        return float(trapezoid(self.g, self.eta))

    def __call__(self, s):
        return np.interp(s, self.eta, self.g, left=0.0, right=0.0)

    def primitive(self, s):
        """G(s) = ∫_{-∞}^{s} g."""
        cumulative = cumulative_trapezoid(self.g, self.eta, initial=0.0)
        return np.interp(s, self.eta, cumulative, left=0.0, right=cumulative[-1])

    def tapered(self, width: float = TAPER_WIDTH) -> "RadiationProfile":
        """Copy padded by ``width`` on both sides, ramping the end values to 0.

        The measured window is left untouched; a profile whose ends are
        already 0 is returned as is.
        """
        if self.g[0] == 0.0 and self.g[-1] == 0.0:
            return self
        step = self.spacing
        n = max(2, math.ceil(width / step - 1e-9))
        left = self.eta[0] - step * np.arange(n, 0, -1)
        right = self.eta[-1] + step * np.arange(1, n + 1)
        rise = smooth_ramp(np.arange(n) / n)
        g = np.concatenate([self.g[0] * rise, self.g, self.g[-1] * rise[::-1]])
        quality = np.concatenate([np.zeros(n), self.quality, np.zeros(n)])
        return replace(self, eta=np.concatenate([left, self.eta, right]), g=g, quality=quality)

    def relative_l2_error(self, other: "RadiationProfile") -> float:
        """‖other - self‖ / ‖self‖ on this profile's eta grid."""
        reference = self.norm_sq()
        if reference == 0:
            return float(np.sqrt(trapezoid(other(self.eta) ** 2, self.eta)))
        difference = trapezoid((other(self.eta) - self.g) ** 2, self.eta)
        return float(np.sqrt(difference / reference))


def default_eta_grid(h: float, eta_min: float, eta_max: float) -> np.ndarray:
    """Nodes eta_min + j h up to eta_max."""
    count = int(np.floor((eta_max - eta_min) / h + 1e-9)) + 1
    return eta_min + h * np.arange(count)


def zero_profile(eta: np.ndarray, params: ModelParams) -> RadiationProfile:
    zero = np.zeros_like(np.asarray(eta, dtype=float))
    return RadiationProfile(eta, zero, zero.copy(), 0.0, params)


# -------------------- EXTRACTION --------------------
def _sample(source, t: float, radii: np.ndarray, params: ModelParams, direction: str) -> np.ndarray:
    if isinstance(source, ReducedTrajectory):
        red = source.at(t)
    else:
        red = to_reduced(source.at(t), params)
    values = red.v_plus if direction == "plus" else red.v_minus
    return np.interp(radii, red.grid.r, values)


def extract_radiation(
    source: Trajectory | ReducedTrajectory,
    eta_grid,
    t_list,
    params: ModelParams,
    direction: str = "plus",
) -> RadiationProfile:
    """g(η) = ½ v+(t - η, t) at the latest time of ``t_list``.

    ``quality`` is half the change against the second latest time. With
    ``direction="minus"`` the run is read backward in time and the profile is
    g-(s) = ½ v-(s - t, t) at the two earliest times.
    """
    if direction not in ("plus", "minus"):
        raise PreconditionError(f"direction must be 'plus' or 'minus', got {direction!r}")
    eta = np.asarray(eta_grid, dtype=float)
    times = sorted(set(float(t) for t in t_list))
    if len(times) < 2:
        raise PreconditionError("extraction needs at least two distinct times")
    if direction == "plus":
        t_main, t_prev = times[-1], times[-2]
    else:
        t_main, t_prev = times[0], times[1]

    sign = 1.0 if direction == "plus" else -1.0
    samples = []
    for t in (t_main, t_prev):
        radii = sign * (t - eta)
        if radii.min() < MIN_EXTRACTION_RADIUS - 1e-9:
            raise DomainError(
                f"extraction at t={t:g} reaches r={radii.min():g} < {MIN_EXTRACTION_RADIUS:g}; "
                f"use a later time or a smaller eta range"
            )
        if radii.max() > source.grid.r_max + 1e-9:
            raise DomainError(f"extraction at t={t:g} needs r={radii.max():g} beyond r_max={source.grid.r_max:g}")
        samples.append(_sample(source, t, radii, params, direction))

    g = 0.5 * samples[0]
    quality = 0.5 * np.abs(samples[0] - samples[1])
    logger.debug("extracted %s profile at t=%g, max quality %.3e", direction, t_main, quality.max())
    return RadiationProfile(eta, g, quality, t_main, params, direction)


# -------------------- FREE WAVE FROM A PROFILE --------------------
class FreeWaveEvaluator:
    """ũ = -r^{-k} ∫_{t-r}^{t+r} g(η) dη together with ũ_t and ũ_r.

    ũ solves the free equation with the extra potential λ_d ũ / r², so it is a
    free wave only for d = 3; elsewhere it is the far-field approximation.
    """

    def __init__(self, profile: RadiationProfile, params: ModelParams):
        self.profile = profile
        self.params = params

    def reduced(self, r, t: float):
        """(w̃, w̃_t, w̃_r) at radii ``r``."""
        r = np.asarray(r, dtype=float)
        g = self.profile
        w = -(g.primitive(t + r) - g.primitive(t - r))
        wt = g(t - r) - g(t + r)
        wr = -(g(t + r) + g(t - r))
        return w, wt, wr

    def fields(self, r, t: float):
        """(ũ, ũ_t, ũ_r); every component is 0 at r = 0."""
        r = np.asarray(r, dtype=float)
        k = self.params.k
        w, wt, wr = self.reduced(r, t)
        u = np.zeros_like(r)
        ut = np.zeros_like(r)
        ur = np.zeros_like(r)
        pos = r > 0
        rk = r[pos] ** k
        u[pos] = w[pos] / rk
        ut[pos] = wt[pos] / rk
        ur[pos] = wr[pos] / rk - k * w[pos] / (rk * r[pos])
        return u, ut, ur

    def state(self, grid: RadialGrid, t: float) -> FieldState:
        u, ut, _ = self.fields(grid.r, t)
        return FieldState(grid, t, u, ut)

    def __call__(self, r, t: float):
        return self.fields(r, t)


def approximate_free_wave(profile: RadiationProfile, params: ModelParams | None = None) -> FreeWaveEvaluator:
    return FreeWaveEvaluator(profile, params or profile.params)


def linear_params(params: ModelParams) -> ModelParams:
    """Same d and p with zeta = 0."""
    linear = params.model_copy(update={"zeta": 0})
    require_valid(linear)
    return linear


def reconstruct_free_wave(
    profile: RadiationProfile,
    t_match: float,
    params: ModelParams,
    grid: RadialGrid | None = None,
    cfg: EvolutionConfig | None = None,
) -> Trajectory:
    """Linear trajectory on [0, t_match] whose radiation profile approximates ``profile``.

    (ũ, ũ_t) are sampled at t_match, cut off smoothly just outside the cone
    t_match + R, and run backward with the free solver.
    """
    linear = linear_params(params)
    tapered = profile.tapered()
    radius = tapered.support_radius
    if t_match <= radius:
        raise PreconditionError(f"t_match={t_match:g} must exceed the profile support radius {radius:g}")
    support = t_match + radius + 1.0
    needed = support + t_match + 2.0
    if grid is None:
        grid = RadialGrid.from_spacing(needed, tapered.spacing)
    elif grid.r_max < needed:
        raise DomainError(f"backward reconstruction needs r_max >= {needed:g}, grid has {grid.r_max:g}")

    evaluator = approximate_free_wave(tapered, linear)
    sampled = evaluator.state(grid, t_match)
    cutoff = 1.0 - smooth_ramp(grid.r - (t_match + radius))
    start = FieldState(grid, t_match, sampled.u * cutoff, sampled.ut * cutoff)
    if cfg is None:
        cfg = EvolutionConfig.sampled(t_match, grid.h, every=1.0)
    elif cfg.t_end != t_match:
        cfg = cfg.model_copy(update={"t_end": t_match})
    logger.info("reconstructing free wave: t_match=%g, R=%g, r_max=%g", t_match, radius, grid.r_max)
    return evolve_backward(start, cfg, linear)


def invert_radiation(
    profile: RadiationProfile,
    t_match: float,
    params: ModelParams,
    grid: RadialGrid | None = None,
    cfg: EvolutionConfig | None = None,
) -> FieldState:
    """Free-wave data (u0, u1) at t = 0 whose radiation profile is ``profile``."""
    return reconstruct_free_wave(profile, t_match, params, grid, cfg).first


# -------------------- CHECKS --------------------
def support_radius(state: FieldState, rel: float = 1e-12) -> float:
    """Largest node where u or u_t is above ``rel`` times its maximum."""
    magnitude = np.maximum(np.abs(state.u), np.abs(state.ut))
    peak = magnitude.max()
    if peak == 0:
        return 0.0
    return float(state.grid.r[np.nonzero(magnitude > rel * peak)[0][-1]])


def radiation_of(
    data: FieldState,
    params: ModelParams,
    t_extract: float | None = None,
    eta_grid=None,
    cfg: EvolutionConfig | None = None,
) -> RadiationProfile:
    """Radiation profile of the linear evolution of ``data``, sampled at t_extract."""
    linear = linear_params(params)
    grid = data.grid
    radius = support_radius(data)
    room = grid.r_max - radius - 2.0
    if t_extract is None:
        t_extract = room
    if t_extract > room or t_extract <= 0:
        raise DomainError(f"t_extract={t_extract:g} needs r_max >= {radius + t_extract + 2:g}")
    if eta_grid is None:
        eta_grid = default_eta_grid(grid.h, -radius - 1.0, max(radius + 1.0, 0.5 * t_extract))
    if cfg is None:
        cfg = EvolutionConfig.sampled(t_extract, grid.h, every=1.0)
    elif cfg.t_end != t_extract:
        cfg = cfg.model_copy(update={"t_end": t_extract})
    traj = evolve(data, cfg, linear)
    second = traj.times[-2] if len(traj.times) > 1 else traj.times[-1]
    return extract_radiation(traj, eta_grid, [second, traj.times[-1]], linear)


def isometry_residual(
    data: FieldState,
    params: ModelParams,
    t_extract: float | None = None,
    eta_grid=None,
    cfg: EvolutionConfig | None = None,
) -> tuple[float, float]:
    """(‖g‖², ‖(u0, u1)‖²_{Ḣ¹×L²} / (2c_d)) for the linear evolution of ``data``."""
    linear = linear_params(params)
    rhs = energy_norm_sq(data, linear) / (2.0 * derive_constants(linear).c_d)
    if rhs == 0:
        return 0.0, 0.0
    profile = radiation_of(data, linear, t_extract, eta_grid, cfg)
    return profile.norm_sq(), rhs


def round_trip_error(
    profile: RadiationProfile,
    t_match: float,
    params: ModelParams,
    t_extract: float | None = None,
) -> float:
    """‖T(invert(g)) - g‖ / ‖g‖."""
    tapered = profile.tapered()
    data = invert_radiation(tapered, t_match, params)
    t_extract = t_match if t_extract is None else t_extract
    data = extend_state(data, data.grid.r_max + t_extract + 3.0)
    recovered = radiation_of(data, params, t_extract, eta_grid=tapered.eta)
    return tapered.relative_l2_error(recovered)


def radiation_l2_deficit(
    traj: Trajectory,
    profile: RadiationProfile,
    params: ModelParams,
    r_lo=0.0,
    r_hi=None,
) -> tuple[np.ndarray, np.ndarray]:
    """∫ |r^k u_r + g(t-r)|² + |r^k u_t - g(t-r)|² dr over [r_lo(t), r_hi(t)].

    ``r_lo`` and ``r_hi`` are numbers or callables of t; the default band is the
    whole mesh.
    """
    grid = traj.grid
    r = grid.r
    rk = r**params.k
    times = traj.times
    values = np.empty_like(times)
    for i, state in enumerate(traj.snapshots):
        g = profile(state.t - r)
        ur = radial_derivative(state.u, grid.h)
        integrand = (rk * ur + g) ** 2 + (rk * state.ut - g) ** 2
        cumulative = cumulative_trapezoid(integrand, dx=grid.h, initial=0.0)
        lo = r_lo(state.t) if callable(r_lo) else r_lo
        hi = grid.r_max if r_hi is None else (r_hi(state.t) if callable(r_hi) else r_hi)
        values[i] = interval(cumulative, grid, lo, hi)
    return times, values


# -------------------- SERIALISATION --------------------
def save_profile(profile: RadiationProfile, path: str | Path) -> Path:
    header = {
        "t_extract": profile.t_extract,
        "direction": profile.direction,
        "params": profile.params.model_dump(),
        "norm_sq": profile.norm_sq(),
        "max_quality": float(profile.quality.max()),
    }
    return write_table(path, header, {"eta": profile.eta, "g": profile.g, "quality": profile.quality})


def load_profile(path: str | Path) -> RadiationProfile:
    header, columns = read_table(path)
    return RadiationProfile(
        columns["eta"],
        columns["g"],
        columns["quality"],
        float(header["t_extract"]),
        ModelParams(**header["params"]),
        header.get("direction", "plus"),
    )
