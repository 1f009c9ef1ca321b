"""Model parameters (d, p, zeta) and every constant derived from them.

The admissible range is the energy subcritical, superconformal one::

    3 <= d <= 6,   p_c(d) = 1 + 4/(d-1) <= p < p_e(d) = 1 + 4/(d-2)

``zeta`` selects the equation: -1 for the defocusing problem
``u_tt - Δu = -|u|^{p-1} u`` and 0 for the free wave equation.
"""

import math

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import gamma

from exceptions import ParameterError

D_MIN, D_MAX = 3, 6


class ModelParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: int
    p: float
    zeta: int = -1

    @property
    def k(self) -> float:
        """Exponent of the reduction w = r^k u, k = (d-1)/2."""
        return (self.d - 1) / 2.0

    @property
    def linear(self) -> bool:
        return self.zeta == 0


class DerivedConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda_d: float
    beta: float
    kappa_0: float
    s_p: float
    c_d: float
    p_c: float
    p_e: float


def p_conformal(d: int) -> float:
    return 1.0 + 4.0 / (d - 1)


def p_energy(d: int) -> float:
    return 1.0 + 4.0 / (d - 2)


def sphere_area(d: int) -> float:
    """Area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / float(gamma(d / 2.0))


def validate_params(params: ModelParams) -> str | None:
    """Return ``None`` when valid, otherwise the first violated rule."""
    d, p = params.d, params.p
    if not D_MIN <= d <= D_MAX:
        return f"d out of range: d={d} not in {D_MIN}..{D_MAX}"
    if not math.isfinite(p):
        return f"p must be finite, got p={p}"
    p_c, p_e = p_conformal(d), p_energy(d)
    if p < p_c:
        return f"p < p_c({d})={p_c:g}: p={p:g}"
    if p >= p_e:
        return f"p ≥ p_e({d})={p_e:g}: p={p:g}"
    if params.zeta not in (-1, 0):
        return f"zeta must be -1 or 0, got zeta={params.zeta}"
    return None


def require_valid(params: ModelParams) -> None:
    violation = validate_params(params)
    if violation:
        raise ParameterError(violation)


def derive_constants(params: ModelParams) -> DerivedConstants:
    require_valid(params)
    d, p = params.d, params.p
    return DerivedConstants(
        lambda_d=(d - 1) * (d - 3) / 4.0,
        beta=((d - 1) * (p - 1) - 2) / (2.0 * (p + 1)),
        kappa_0=(4 - (d - 2) * (p - 1)) / (p + 1),
        s_p=d / 2.0 - 2.0 / (p - 1),
        c_d=sphere_area(d),
        p_c=p_conformal(d),
        p_e=p_energy(d),
    )


def nonlinearity(u, p: float):
    """|u|^{p-1} u, valid for non-integer p."""
    return np.sign(u) * np.abs(u) ** p
