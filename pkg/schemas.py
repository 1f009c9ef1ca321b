from fractions import Fraction
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import Tolerances
from params import ModelParams, derive_constants, validate_params

DOMAIN_MARGIN = 2.0


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")


# -----------------------------
# Initial data families
# -----------------------------
class GaussianFamily(_Spec):
    family: Literal["gaussian"]
    amplitude: float = 1.0
    width: float = Field(1.0, gt=0)
    center: float = Field(0.0, ge=0)
    in_velocity: bool = False          # put the profile in u1 instead of u0
    support: Optional[float] = None    # cut-off radius, default center + 8 width

    def support_radius(self, params: ModelParams) -> float:
        return self.support if self.support is not None else self.center + 8.0 * self.width


class CompactBumpFamily(_Spec):
    family: Literal["compact_bump"]
    amplitude: float = 1.0
    inner_radius: float = Field(0.0, ge=0)
    outer_radius: float = Field(gt=0)
    in_velocity: bool = False

    @model_validator(mode="after")
    def ordered_radii(self):
        if self.inner_radius >= self.outer_radius:
            raise ValueError("inner_radius must be below outer_radius")
        return self

    def support_radius(self, params: ModelParams) -> float:
        return self.outer_radius


class PowerTailFamily(_Spec):
    family: Literal["power_tail"]
    epsilon: float = Field(gt=0)
    amplitude: float = 1.0
    support: float = Field(60.0, gt=4)

    def support_radius(self, params: ModelParams) -> float:
        return self.support


class FromRadiationFamily(_Spec):
    family: Literal["from_radiation"]
    profile: str
    t_match: Optional[float] = Field(None, gt=0)
    support: Optional[float] = None    # unknown until the data is built

    def support_radius(self, params: ModelParams) -> Optional[float]:
        return self.support


class RandomSmoothFamily(_Spec):
    family: Literal["random_smooth"]
    n_bumps: int = Field(6, ge=1)
    amplitude: float = 1.0
    max_center: float = Field(4.0, ge=0)
    min_width: float = Field(0.3, gt=0)
    max_width: float = Field(1.0, gt=0)
    seed: Optional[int] = None         # overrides the scenario seed

    @model_validator(mode="after")
    def ordered_widths(self):
        if self.min_width > self.max_width:
            raise ValueError("min_width must not exceed max_width")
        return self

    def support_radius(self, params: ModelParams) -> float:
        return self.max_center + 6.0 * self.max_width


InitialDataFamily = Annotated[
    Union[GaussianFamily, CompactBumpFamily, PowerTailFamily, FromRadiationFamily, RandomSmoothFamily],
    Field(discriminator="family"),
]


# -----------------------------
# Grid, evolution, diagnostics
# -----------------------------
class GridSpec(_Spec):
    r_max: float = Field(gt=0)
    h: float = Field(gt=0)


class EvolutionSpec(_Spec):
    t_end: float = Field(gt=0)
    cfl: float = Field(0.25, gt=0, le=0.5)
    snapshot_every: float = Field(1.0, gt=0)
    solver: Literal["fd", "char"] = "fd"
    both_directions: bool = False      # evolve over [-t_end, t_end]


DiagnosticName = Literal[
    "energy",
    "flux",
    "cone",
    "morawetz",
    "energy_distribution",
    "potential",
    "pointwise",
    "radiation",
    "exterior_deficit",
    "full_deficit",
    "interior_decay",
    "middle_band",
    "hardy",
]

NONLINEAR_ONLY = {"morawetz", "potential", "interior_decay"}
NEEDS_RADIATION = {"exterior_deficit", "full_deficit", "middle_band"}


class DiagnosticsSpec(_Spec):
    requests: list[DiagnosticName] = Field(default_factory=lambda: ["energy", "pointwise"])
    eta: float = 0.0
    flux_window: Optional[tuple[float, float]] = None
    morawetz_radius: float = Field(1.0, gt=0)
    distribution_radius: float = Field(1.0, gt=0)
    extraction_times: Optional[list[float]] = None
    eta_range: Optional[tuple[float, float]] = None
    t_match: Optional[float] = Field(None, gt=0)
    deficit_reference_time: Optional[float] = None
    decay_c: float = Field(1.0, gt=0)
    decay_kappa: Optional[float] = None    # default κ0(d, p)
    decay_window: Optional[tuple[float, float]] = None
    band_c: float = Field(1.0, gt=0)
    band_gamma: float = Field(0.0, ge=0)
    band_radius: float = Field(1.0, gt=0)


# -----------------------------
# Scenario
# -----------------------------
class Scenario(_Spec):
    name: str = "scenario"
    params: ModelParams
    grid: GridSpec
    evolution: EvolutionSpec
    initial_data: InitialDataFamily
    diagnostics: DiagnosticsSpec = Field(default_factory=DiagnosticsSpec)
    output_dir: Optional[str] = None
    seed: int = 0
    tolerances: Tolerances = Field(default_factory=Tolerances)

    @field_validator("params", mode="before")
    @classmethod
    def exact_fractions(cls, value):
        # p may be written as "7/3"
        if isinstance(value, dict) and isinstance(value.get("p"), str):
            value = {**value, "p": float(Fraction(value["p"]))}
        return value

    @model_validator(mode="after")
    def check_invariants(self):
        violation = validate_params(self.params)
        if violation:
            raise ValueError(violation)

        support = self.initial_data.support_radius(self.params)
        if support is not None:
            needed = support + self.evolution.t_end + DOMAIN_MARGIN
            if self.grid.r_max < needed:
                raise ValueError(
                    f"grid.r_max={self.grid.r_max:g} violates the domain contract: "
                    f"need r_max >= support + t_end + 2 = {needed:g}"
                )
        if self.grid.h * 16 > self.grid.r_max:
            raise ValueError("grid.h too coarse for r_max (fewer than 16 cells)")

        requests = set(self.diagnostics.requests)
        if self.params.zeta == 0 and requests & NONLINEAR_ONLY:
            raise ValueError(f"{sorted(requests & NONLINEAR_ONLY)} need zeta = -1")
        if "energy_distribution" in requests and not self.evolution.both_directions:
            raise ValueError("energy_distribution needs evolution.both_directions = true")
        if self.evolution.both_directions and self.evolution.solver != "fd":
            raise ValueError("both_directions is only available with the fd solver")

        kappa = self.decay_kappa
        if "interior_decay" in requests and not 0 < kappa < 1:
            raise ValueError(f"diagnostics.decay_kappa must lie in (0, 1), got {kappa:g}")
        beta = derive_constants(self.params).beta
        if "middle_band" in requests and self.diagnostics.band_gamma > 2 * beta + 1e-12:
            raise ValueError(f"diagnostics.band_gamma must lie in [0, 2β] = [0, {2 * beta:g}]")
        return self

    @property
    def decay_kappa(self) -> float:
        if self.diagnostics.decay_kappa is not None:
            return self.diagnostics.decay_kappa
        return derive_constants(self.params).kappa_0

    @property
    def wants_radiation(self) -> bool:
        requests = set(self.diagnostics.requests)
        return "radiation" in requests or bool(requests & NEEDS_RADIATION)
