"""Observables over trajectories: light-cone energy flux, Morawetz sums,
scattering deficits, decay fits and pointwise bounds.

Every inequality comes back as a small pydantic model that carries the raw
numbers and a ``verdict`` against the shared tolerance table.
"""

import math
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.integrate import simpson, trapezoid
from scipy.stats import linregress

from config import DEFAULT_TOLERANCES, Tolerances
from exceptions import DomainError, FitError, PreconditionError
from grid_state import (
    FieldState,
    cumulative_radial_integral,
    energy,
    energy_density,
    exterior_weighted_energy,
    hardy_integral,
    hdot1_norm,
    interval,
    lebesgue_norm,
    potential_integral,
    radial_derivative,
)
from params import ModelParams, derive_constants
from radiation import FreeWaveEvaluator, RadiationProfile, radiation_l2_deficit
from solver_char import trace_characteristic
from solver_fd import Trajectory
from utils.io import write_table

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 8


class Verdict(BaseModel):
    name: str
    passed: bool
    value: float
    bound: float
    detail: str = ""


class _Result(BaseModel):
    model_config = ConfigDict(frozen=True)


# -------------------- SAMPLING HELPERS --------------------
def _window(traj: Trajectory, t_lo: float, t_hi: float) -> list[FieldState]:
    states = traj.between(t_lo, t_hi)
    if len(states) < 2:
        raise DomainError(f"fewer than two snapshots in [{t_lo:g}, {t_hi:g}]")
    return states


def _inside(state: FieldState, params: ModelParams, radius: float) -> float:
    """E(t; B(0, radius))."""
    cumulative = cumulative_radial_integral(energy_density(state, params), state.grid, params)
    return interval(cumulative, state.grid, 0.0, radius)


def _cone_flux_density(state: FieldState, radius: float, params: ModelParams) -> float:
    """c_d r^{d-1} (½(u_t + u_r)² - ζ/(p+1)|u|^{p+1}) at r = radius."""
    if radius <= 0:
        return 0.0
    grid = state.grid
    c_d = derive_constants(params).c_d
    u = np.interp(radius, grid.r, state.u)
    ut = np.interp(radius, grid.r, state.ut)
    ur = np.interp(radius, grid.r, radial_derivative(state.u, grid.h))
    density = 0.5 * (ut + ur) ** 2
    if params.zeta:
        density -= params.zeta / (params.p + 1) * abs(u) ** (params.p + 1)
    return c_d * radius ** (params.d - 1) * density


def _cone_hardy_density(state: FieldState, radius: float, params: ModelParams) -> float:
    """c_d r^{d-3} u² at r = radius."""
    if radius <= 0 and params.d > 3:
        return 0.0
    c_d = derive_constants(params).c_d
    u = np.interp(radius, state.grid.r, state.u)
    return c_d * max(radius, 0.0) ** (params.d - 3) * u**2


def _cone_states(traj: Trajectory, eta: float) -> list[FieldState]:
    """Snapshots with the forward cone r = t - eta inside the mesh."""
    r_max = traj.grid.r_max
    return [s for s in traj.snapshots if s.t >= eta and s.t - eta <= r_max]


# -------------------- ENERGY FLUX --------------------
class FluxBalance(_Result):
    delta_interior: float
    surface_integral: float
    energy: float
    max_step: float = 0.0   # widest gap between the snapshots integrated over

    @property
    def residual(self) -> float:
        return abs(self.delta_interior - self.surface_integral)

    def verdict(self, tol: Tolerances = DEFAULT_TOLERANCES) -> Verdict:
        scale = self.energy or 1.0
        return Verdict(
            name="flux_balance",
            passed=self.residual <= tol.flux_residual * scale,
            value=self.residual / scale,
            bound=tol.flux_residual,
            detail=f"snapshot spacing {self.max_step:.3g}",
        )


def flux_balance(traj: Trajectory, eta: float, t1: float, t2: float, params: ModelParams) -> FluxBalance:
    """Both sides of E(t2; B(0, t2-η)) - E(t1; B(0, t1-η)) = ∫ flux across r = t - η."""
    if not eta <= t1 < t2:
        raise PreconditionError(f"need eta <= t1 < t2, got eta={eta}, t1={t1}, t2={t2}")
    if t2 - eta > traj.grid.r_max:
        raise DomainError(f"cone radius {t2 - eta:g} at t2 exceeds r_max={traj.grid.r_max:g}")
    states = _window(traj, t1, t2)
    first, last = states[0], states[-1]
    delta = _inside(last, params, last.t - eta) - _inside(first, params, first.t - eta)
    times = np.array([s.t for s in states])
    flux = np.array([_cone_flux_density(s, s.t - eta, params) for s in states])
    return FluxBalance(
        delta_interior=delta,
        surface_integral=float(simpson(flux, x=times)),
        max_step=float(np.diff(times).max()),
        energy=energy(traj.first, params),
    )


class ConeMonotonicity(_Result):
    worst_increment: float
    energy: float
    direction: str
    times: list[float]
    values: list[float]

    def verdict(self, tol: Tolerances = DEFAULT_TOLERANCES) -> Verdict:
        bound = -tol.monotonicity * self.energy
        return Verdict(
            name=f"cone_monotonicity_{self.direction}",
            passed=self.worst_increment >= bound,
            value=self.worst_increment,
            bound=bound,
        )


def cone_monotonicity(traj: Trajectory, eta: float, params: ModelParams, direction: str = "forward") -> ConeMonotonicity:
    """Most negative step of E(t; B(0, t-η)) (forward) or of -E(t; B(0, η-t)) (backward)."""
    r_max = traj.grid.r_max
    if direction == "forward":
        states = _cone_states(traj, eta)
        values = [_inside(s, params, s.t - eta) for s in states]
        steps = np.diff(values)
    elif direction == "backward":
        states = [s for s in traj.snapshots if s.t <= eta and eta - s.t <= r_max]
        values = [_inside(s, params, eta - s.t) for s in states]
        steps = -np.diff(values)
    else:
        raise PreconditionError(f"direction must be 'forward' or 'backward', got {direction!r}")
    worst = float(min(steps.min(), 0.0)) if len(steps) else 0.0
    return ConeMonotonicity(
        worst_increment=worst,
        energy=energy(traj.first, params),
        direction=direction,
        times=[s.t for s in states],
        values=[float(v) for v in values],
    )


class ConeBounds(_Result):
    flux_total: float
    hardy_term: float
    energy: float

    def verdict(self, tol: Tolerances = DEFAULT_TOLERANCES) -> Verdict:
        bound = self.energy * (1.0 + tol.flux_bound)
        return Verdict(name="cone_flux_bound", passed=self.flux_total <= bound, value=self.flux_total, bound=bound)


def cone_surface_bounds(traj: Trajectory, eta: float, params: ModelParams) -> ConeBounds:
    states = _cone_states(traj, eta)
    E = energy(traj.first, params)
    if len(states) < 2:
        return ConeBounds(flux_total=0.0, hardy_term=0.0, energy=E)
    times = np.array([s.t for s in states])
    flux = np.array([_cone_flux_density(s, s.t - eta, params) for s in states])
    hardy = np.array([_cone_hardy_density(s, s.t - eta, params) for s in states])
    return ConeBounds(flux_total=float(simpson(flux, x=times)), hardy_term=float(simpson(hardy, x=times)), energy=E)


# -------------------- MORAWETZ --------------------
def _morawetz_densities(state: FieldState, R: float, params: ModelParams) -> tuple[float, float, float]:
    grid = state.grid
    d, p = params.d, params.p
    c_d = derive_constants(params).c_d
    ur = radial_derivative(state.u, grid.h)
    potential = np.abs(state.u) ** (p + 1)
    local = ur**2 + state.ut**2 + ((d - 1) * (p - 1) - 2) / (p + 1) * potential
    inner = interval(cumulative_radial_integral(local, grid, params), grid, 0.0, R)
    sphere = c_d * R ** (d - 1) * float(np.interp(R, grid.r, state.u)) ** 2
    weighted = np.zeros_like(potential)
    weighted[1:] = potential[1:] / grid.r[1:]
    outer = interval(cumulative_radial_integral(weighted, grid, params), grid, R, grid.r_max)
    return inner, sphere, outer


class MorawetzReport(_Result):
    local_term: float
    sphere_term: float
    potential_term: float
    energy: float
    t_lo: float
    t_hi: float

    @property
    def total(self) -> float:
        return self.local_term + self.sphere_term + self.potential_term

    def verdict(self, tol: Tolerances = DEFAULT_TOLERANCES) -> Verdict:
        bound = 2.0 * self.energy * (1.0 + tol.morawetz)
        nonnegative = min(self.local_term, self.sphere_term, self.potential_term) >= 0
        return Verdict(
            name="morawetz",
            passed=nonnegative and self.total <= bound,
            value=self.total,
            bound=bound,
            detail="" if nonnegative else "negative component",
        )


def morawetz_partials(traj: Trajectory, R: float, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (local, sphere, potential) terms at every snapshot, shape (N, 3)."""
    if params.zeta != -1:
        raise PreconditionError("Morawetz sums are defined for the defocusing equation only")
    if not 0 < R < traj.grid.r_max:
        raise PreconditionError(f"need 0 < R < r_max, got R={R}")
    d, p = params.d, params.p
    weights = np.array([1.0 / (2.0 * R), (d - 1) / (4.0 * R**2), (d - 1) * (p - 1) / (2.0 * (p + 1))])
    times = traj.times
    densities = np.array([_morawetz_densities(s, R, params) for s in traj.snapshots]) * weights
    partial = np.zeros_like(densities)
    if len(times) > 1:
        steps = 0.5 * (densities[1:] + densities[:-1]) * np.diff(times)[:, None]
        partial[1:] = np.cumsum(steps, axis=0)
    return times, partial


def morawetz_report(traj: Trajectory, R: float, params: ModelParams) -> MorawetzReport:
    times, partial = morawetz_partials(traj, R, params)
    local, sphere, potential = (float(x) for x in partial[-1])
    return MorawetzReport(
        local_term=local,
        sphere_term=sphere,
        potential_term=potential,
        energy=energy(traj.first, params),
        t_lo=float(times[0]),
        t_hi=float(times[-1]),
    )


class EnergyDistribution(_Result):
    lhs: float
    rhs: float
    energy: float

    def verdict(self, tol: Tolerances = DEFAULT_TOLERANCES) -> Verdict:
        bound = self.rhs + tol.energy_distribution * self.energy
        return Verdict(name="energy_distribution", passed=self.lhs <= bound, value=self.lhs, bound=bound)


def energy_distribution_check(traj: Trajectory, R: float, params: ModelParams) -> EnergyDistribution:
    """∫_{|t|>R}∫_{|x|<R} e against ∫_{-R}^{R}∫_{|x|>R} e over the simulated window."""
    times = traj.times
    if times[0] > -R or times[-1] < R:
        raise PreconditionError(f"trajectory must cover [-{R:g}, {R:g}], covers [{times[0]:g}, {times[-1]:g}]")
    grid = traj.grid
    inner = np.empty_like(times)
    outer = np.empty_like(times)
    for i, state in enumerate(traj.snapshots):
        cumulative = cumulative_radial_integral(energy_density(state, params), grid, params)
        inner[i] = interval(cumulative, grid, 0.0, R)
        outer[i] = cumulative[-1] - inner[i]
    eps = 1e-9 * max(1.0, R)
    early = times <= -R + eps
    late = times >= R - eps
    middle = np.abs(times) <= R + eps
    lhs = 0.0
    for mask in (early, late):
        if mask.sum() > 1:
            lhs += float(trapezoid(inner[mask], times[mask]))
    rhs = float(trapezoid(outer[middle], times[middle]))
    return EnergyDistribution(lhs=lhs, rhs=rhs, energy=energy(traj.at(0.0), params))


class PotentialSeries(_Result):
    times: list[float]
    values: list[float]

    @property
    def liminf_proxy(self) -> float:
        """min over the last third of the run, relative to the first value."""
        values = np.asarray(self.values)
        if values[0] == 0:
            return 0.0
        tail = values[len(values) - max(1, len(values) // 3):]
        return float(tail.min() / values[0])

    def verdict(self, tol: Tolerances = DEFAULT_TOLERANCES) -> Verdict:
        return Verdict(
            name="potential_liminf",
            passed=self.liminf_proxy <= tol.liminf_threshold,
            value=self.liminf_proxy,
            bound=tol.liminf_threshold,
        )


def potential_series(traj: Trajectory, params: ModelParams | None = None) -> PotentialSeries:
    params = params or traj.params
    if params.zeta == 0:
        raise PreconditionError("the potential series is only defined for the nonlinear equation")
    return PotentialSeries(
        times=list(map(float, traj.times)),
        values=[potential_integral(s, params) for s in traj.snapshots],
    )


# -------------------- POINTWISE BOUNDS --------------------
class PointwiseRatios(_Result):
    ratio1_max: float
    ratio2_max: float
    bound1: float
    bound2: float

    def verdict(self, tol: Tolerances = DEFAULT_TOLERANCES) -> Verdict:
        value = max(self.ratio1_max / self.bound1, self.ratio2_max / self.bound2)
        return Verdict(name="pointwise", passed=value <= 1.0 + tol.pointwise, value=value, bound=1.0 + tol.pointwise)


def pointwise_constants(params: ModelParams) -> tuple[float, float]:
    """Explicit constants of the two radial pointwise bounds."""
    d, p = params.d, params.p
    c_d = derive_constants(params).c_d
    bound1 = 1.0 / math.sqrt(c_d * (d - 2))
    bound2 = (2.0 ** (2 * d + p + 1) / c_d**2) ** (1.0 / (p + 3))
    return bound1, bound2


def pointwise_ratio(state: FieldState, params: ModelParams) -> PointwiseRatios:
    """max over r >= h of |u| r^{(d-2)/2} / ‖u‖_Ḣ¹ and of the interpolated bound."""
    d, p = params.d, params.p
    bound1, bound2 = pointwise_constants(params)
    hdot = hdot1_norm(state, params)
    lp = lebesgue_norm(state, p + 1, params)
    r = state.grid.r[1:]
    u = np.abs(state.u[1:])
    if hdot == 0 or lp == 0:
        return PointwiseRatios(ratio1_max=0.0, ratio2_max=0.0, bound1=bound1, bound2=bound2)
    ratio1 = u * r ** ((d - 2) / 2.0) / hdot
    ratio2 = u * r ** (2.0 * (d - 1) / (p + 3)) / (hdot ** (2.0 / (p + 3)) * lp ** ((p + 1) / (p + 3)))
    return PointwiseRatios(
        ratio1_max=float(ratio1.max()), ratio2_max=float(ratio2.max()), bound1=bound1, bound2=bound2
    )


# -------------------- SCATTERING DEFICITS --------------------
def _free_derivatives(free, state: FieldState) -> tuple[np.ndarray, np.ndarray]:
    """(ũ_r, ũ_t) of the comparison free wave at the snapshot time."""
    if isinstance(free, FreeWaveEvaluator):
        _, ut, ur = free.fields(state.grid.r, state.t)
        return ur, ut
    other = free.at(state.t)
    ur = radial_derivative(other.u, other.grid.h)
    if other.grid == state.grid:
        return ur, other.ut
    r = state.grid.r
    return np.interp(r, other.grid.r, ur, right=0.0), np.interp(r, other.grid.r, other.ut, right=0.0)


class DeficitSeries(_Result):
    times: list[float]
    values: list[float]
    energy: float

    def value_at(self, t: float) -> float:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.values[i]

    def decay_ratio(self, t_ref: float | None = None) -> float:
        """final / value at t_ref (first positive value by default)."""
        values = np.asarray(self.values)
        if t_ref is None:
            positive = values[values > 0]
            reference = positive[0] if len(positive) else 0.0
        else:
            reference = self.value_at(t_ref)
        return float(values[-1] / reference) if reference > 0 else 0.0

    def worst_late_increase(self) -> float:
        """Largest increment over the second half of the series."""
        values = np.asarray(self.values)
        tail = values[len(values) // 2:]
        return float(np.diff(tail).max()) if len(tail) > 1 else 0.0

    def verdict(self, tol: Tolerances = DEFAULT_TOLERANCES, t_ref: float | None = None, bound: float | None = None) -> Verdict:
        bound = tol.exterior_decay if bound is None else bound
        ratio = self.decay_ratio(t_ref)
        eventually = self.worst_late_increase() <= tol.exterior_slack * self.energy
        return Verdict(
            name="deficit_decay",
            passed=ratio <= bound and eventually,
            value=ratio,
            bound=bound,
            detail="" if eventually else "not eventually nonincreasing",
        )


def exterior_deficit(traj_nl: Trajectory, free, eta: float, params: ModelParams) -> DeficitSeries:
    """∫_{|x| > t-η} |∇u - ∇ũ|² + |u_t - ũ_t|² dx per snapshot."""
    grid = traj_nl.grid
    values = []
    for state in traj_nl.snapshots:
        ur_free, ut_free = _free_derivatives(free, state)
        ur = radial_derivative(state.u, grid.h)
        integrand = (ur - ur_free) ** 2 + (state.ut - ut_free) ** 2
        cumulative = cumulative_radial_integral(integrand, grid, params)
        values.append(interval(cumulative, grid, max(state.t - eta, 0.0), grid.r_max))
    return DeficitSeries(times=list(map(float, traj_nl.times)), values=values, energy=energy(traj_nl.first, params))


class FullDeficit(DeficitSeries):
    radiated_energy: float

    @property
    def gap(self) -> float:
        """E - c_d ‖g‖²."""
        return self.energy - self.radiated_energy

    def gap_verdicts(self, tol: Tolerances = DEFAULT_TOLERANCES) -> list[Verdict]:
        scale = self.energy or 1.0
        return [
            Verdict(
                name="radiated_energy_bound",
                passed=self.gap >= -tol.energy_gap * scale,
                value=self.gap / scale,
                bound=-tol.energy_gap,
            ),
            Verdict(
                name="energy_gap",
                passed=self.gap <= tol.gap_fraction * scale,
                value=self.gap / scale,
                bound=tol.gap_fraction,
            ),
        ]


def full_deficit(traj_nl: Trajectory, free, profile: RadiationProfile, params: ModelParams) -> FullDeficit:
    """Whole-space deficit per snapshot plus the energy gap E - c_d ‖g‖²."""
    grid = traj_nl.grid
    values = []
    for state in traj_nl.snapshots:
        ur_free, ut_free = _free_derivatives(free, state)
        ur = radial_derivative(state.u, grid.h)
        integrand = (ur - ur_free) ** 2 + (state.ut - ut_free) ** 2
        values.append(float(cumulative_radial_integral(integrand, grid, params)[-1]))
    c_d = derive_constants(params).c_d
    return FullDeficit(
        times=list(map(float, traj_nl.times)),
        values=values,
        energy=energy(traj_nl.first, params),
        radiated_energy=c_d * profile.norm_sq(),
    )


class EnergySplit(_Result):
    energy: float
    radiated_energy: float
    late_kinetic_gradient: float
    late_potential: float


def scattering_energy_split(traj_nl: Trajectory, profile: RadiationProfile, params: ModelParams) -> EnergySplit:
    """Ẽ = c_d ‖g‖² against the late quadratic energy; the potential part against E - Ẽ."""
    late = traj_nl.snapshots[len(traj_nl.snapshots) - max(1, len(traj_nl.snapshots) // 3):]
    quadratic = [energy(s, params.model_copy(update={"zeta": 0})) for s in late]
    potential = [potential_integral(s, params) / (params.p + 1) for s in late]
    return EnergySplit(
        energy=energy(traj_nl.first, params),
        radiated_energy=derive_constants(params).c_d * profile.norm_sq(),
        late_kinetic_gradient=float(np.mean(quadratic)),
        late_potential=float(np.mean(potential)),
    )


def middle_band_deficit(
    traj_nl: Trajectory,
    profile: RadiationProfile,
    c: float,
    gamma: float,
    R: float,
    params: ModelParams,
) -> DeficitSeries:
    """Radiation-field deficit over the band t - c t^γ < r < t + R."""
    beta = derive_constants(params).beta
    if not 0 <= gamma <= 2 * beta + 1e-12:
        raise PreconditionError(f"gamma must lie in [0, 2β]=[0, {2 * beta:g}], got {gamma}")
    times, values = radiation_l2_deficit(
        traj_nl,
        profile,
        params,
        r_lo=lambda t: max(t - c * max(t, 0.0) ** gamma, 0.0),
        r_hi=lambda t: t + R,
    )
    return DeficitSeries(times=list(map(float, times)), values=list(map(float, values)), energy=energy(traj_nl.first, params))


def late_max(series: DeficitSeries) -> float:
    values = series.values
    return float(max(values[len(values) - max(1, len(values) // 3):]))


# -------------------- DECAY --------------------
class DecayFit(_Result):
    exponent: float
    intercept: float
    r2: float
    window: tuple[float, float]
    samples: int


def fit_decay(times, values, window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares line through (log t, log value) over the positive samples."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (times > 0) & (values > 0) & np.isfinite(values)
    if window is not None:
        mask &= (times >= window[0]) & (times <= window[1])
    if mask.sum() < MIN_FIT_SAMPLES:
        raise FitError(f"decay fit needs {MIN_FIT_SAMPLES} positive samples, got {int(mask.sum())}")
    fit = linregress(np.log(times[mask]), np.log(values[mask]))
    return DecayFit(
        exponent=float(fit.slope),
        intercept=float(fit.intercept),
        r2=float(fit.rvalue**2),
        window=(float(times[mask][0]), float(times[mask][-1])),
        samples=int(mask.sum()),
    )


def center_decay_bound(initial: FieldState, c: float, kappa: float, times, params: ModelParams) -> np.ndarray:
    """2/((1-κ)c) E_κ(u0, u1; t^{(1-κ)/2}) + (2E/c) t^{-(1-κ)/2} for t > 0."""
    E = energy(initial, params)
    times = np.asarray(times, dtype=float)
    bound = np.full_like(times, np.inf)
    for i, t in enumerate(times):
        if t > 0:
            radius = t ** ((1.0 - kappa) / 2.0)
            tail = exterior_weighted_energy(initial, kappa, radius, params)
            bound[i] = 2.0 / ((1.0 - kappa) * c) * tail + 2.0 * E / c * t ** (-(1.0 - kappa) / 2.0)
    return bound


class InteriorDecay(_Result):
    times: list[float]
    values: list[float]
    fit: DecayFit | None = None
    bound: list[float] | None = None

    @property
    def below_bound(self) -> bool | None:
        if self.bound is None:
            return None
        return bool(np.all(np.asarray(self.values) <= np.asarray(self.bound) * (1 + 1e-9)))


def interior_decay(
    traj: Trajectory,
    c: float,
    kappa: float,
    params: ModelParams,
    window: tuple[float, float] | None = None,
    with_bound: bool = False,
) -> InteriorDecay:
    """E(t; B(0, t - c t^{1-κ})) per snapshot; radii <= 0 are skipped."""
    if not 0 < kappa < 1:
        raise PreconditionError(f"kappa must lie in (0, 1), got {kappa}")
    if params.zeta != -1:
        raise PreconditionError("interior decay is measured on defocusing runs")
    times, values = [], []
    for state in traj.snapshots:
        if state.t <= 0:
            continue
        radius = state.t - c * state.t ** (1.0 - kappa)
        if radius <= 0:
            continue
        times.append(float(state.t))
        values.append(_inside(state, params, radius))
    fit = None
    try:
        fit = fit_decay(times, values, window)
    except FitError as exc:
        logger.info("interior decay left unfitted: %s", exc.detail)
    bound = None
    if with_bound and times:
        bound = center_decay_bound(traj.first, c, kappa, times, params).tolist()
    return InteriorDecay(times=times, values=values, fit=fit, bound=bound)


def hardy_series(traj: Trajectory, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """∫ |u|²/|x|² dx per snapshot."""
    return traj.times, np.array([hardy_integral(s, params) for s in traj.snapshots])


def inner_energy_sup(traj: Trajectory, eta: float, params: ModelParams) -> float:
    """sup over simulated t >= η of E(t; B(0, t - η))."""
    states = _cone_states(traj, eta)
    return max((_inside(s, params, s.t - eta) for s in states), default=0.0)


def variation_decay(source, eta: float, t1_values, t2: float, params: ModelParams) -> DecayFit:
    """Fit |v+(t2-η, t2) - v+(t1-η, t1)| against t1 - η."""
    distances, changes = [], []
    for t1 in t1_values:
        trace = trace_characteristic(source, eta, t1, t2, params)
        distances.append(t1 - eta)
        changes.append(abs(trace.v_end - trace.v_start))
    return fit_decay(distances, changes)


# -------------------- REFINEMENT --------------------
def refinement_orders(errors) -> list[float]:
    """log2 of successive error ratios for a sequence of h-halvings."""
    errors = np.asarray(errors, dtype=float)
    return [float(np.log2(a / b)) if a > 0 and b > 0 else float("nan") for a, b in zip(errors[:-1], errors[1:])]


def richardson_order(coarse, medium, fine) -> float:
    """Observed order from three solutions on meshes h, h/2, h/4."""
    first = np.linalg.norm(np.atleast_1d(np.asarray(coarse) - np.asarray(medium)))
    second = np.linalg.norm(np.atleast_1d(np.asarray(medium) - np.asarray(fine)))
    if first == 0 or second == 0:
        return float("nan")
    return float(np.log2(first / second))


# -------------------- RECORDS --------------------
class DiagnosticsRecord(BaseModel):
    t: float
    energy_total: float
    energy_interior: float | None = None
    flux_residual: float | None = None
    morawetz_local: float | None = None
    morawetz_sphere: float | None = None
    morawetz_potential: float | None = None
    potential_integral: float | None = None
    exterior_deficit: float | None = None
    full_deficit: float | None = None
    pointwise_ratio1: float | None = None
    pointwise_ratio2: float | None = None


RECORD_COLUMNS = list(DiagnosticsRecord.model_fields)


def build_records(
    traj: Trajectory,
    params: ModelParams,
    eta: float | None = None,
    morawetz_radius: float | None = None,
    free=None,
) -> list[DiagnosticsRecord]:
    """One record per snapshot; observables that do not apply stay ``None``."""
    records = [DiagnosticsRecord(t=s.t, energy_total=energy(s, params)) for s in traj.snapshots]

    if eta is not None:
        cone = [(i, s) for i, s in enumerate(traj.snapshots) if s.t >= eta and s.t - eta <= traj.grid.r_max]
        if cone:
            start = _inside(cone[0][1], params, cone[0][1].t - eta)
            flux = [_cone_flux_density(s, s.t - eta, params) for _, s in cone]
            times = [s.t for _, s in cone]
            for j, (i, s) in enumerate(cone):
                interior = _inside(s, params, s.t - eta)
                surface = float(trapezoid(flux[: j + 1], times[: j + 1])) if j else 0.0
                records[i].energy_interior = interior
                records[i].flux_residual = abs(interior - start - surface)
        if free is not None:
            deficits = exterior_deficit(traj, free, eta, params).values
            for record, value in zip(records, deficits):
                record.exterior_deficit = value

    if params.zeta == -1:
        if morawetz_radius is not None:
            _, partial = morawetz_partials(traj, morawetz_radius, params)
            for record, (local, sphere, potential) in zip(records, partial):
                record.morawetz_local = float(local)
                record.morawetz_sphere = float(sphere)
                record.morawetz_potential = float(potential)
        for record, state in zip(records, traj.snapshots):
            record.potential_integral = potential_integral(state, params)

    for record, state in zip(records, traj.snapshots):
        ratios = pointwise_ratio(state, params)
        record.pointwise_ratio1 = ratios.ratio1_max
        record.pointwise_ratio2 = ratios.ratio2_max
    return records


def write_records(records: list[DiagnosticsRecord], path: str | Path, header: dict | None = None) -> Path:
    columns = {
        name: np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in records], dtype=float)
        for name in RECORD_COLUMNS
    }
    return write_table(path, header or {}, columns)
