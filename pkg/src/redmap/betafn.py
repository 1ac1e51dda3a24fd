"""Regularized incomplete beta function and the log-derivative helpers.

Forward values wrap scipy's continued-fraction implementation behind strict
domain checks. The inverse verifies its own p-residual and falls back to a
bisection that drives the bracket down to adjacent floats, so shape
parameters far below 1 remain usable even where the CDF is nearly flat or
nearly vertical in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import betainc, betaincinv, betaln

__all__ = [
    "BetaShape",
    "reg_inc_beta",
    "reg_inc_beta_deriv",
    "inv_reg_inc_beta",
    "cdf_log_deriv",
    "density_log_deriv",
    "curvature_factor",
]

_TINY = 5e-324          # smallest positive double, bisection floor
_EXP_CAP = 709.0        # exp() overflows past this
_INV_RESIDUAL_TOL = 1e-12
_BISECT_ITERS = 300


@dataclass(frozen=True)
class BetaShape:
    """Shape pair (alpha, beta) of the drop-probability profile."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (isinstance(self.alpha, (int, float)) and math.isfinite(self.alpha)
                and self.alpha > 0.0):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha!r}")
        if not (isinstance(self.beta, (int, float)) and math.isfinite(self.beta)
                and self.beta > 0.0):
            raise ValueError(f"beta must be positive and finite, got {self.beta!r}")


def _check_x(x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")


def _log_complete_beta(shape: BetaShape) -> float:
    return float(betaln(shape.alpha, shape.beta))


def reg_inc_beta(x: float, shape: BetaShape) -> float:
    """CDF value I(x), strictly increasing from 0 to 1 on [0, 1]."""
    _check_x(x)
    return float(betainc(shape.alpha, shape.beta, x))


def reg_inc_beta_deriv(x: float, shape: BetaShape) -> float:
    """Density I'(x).

    At the endpoints the one-sided limit is returned: +inf when the local
    exponent is negative, the exact finite limit when it is zero or
    positive.
    """
    _check_x(x)
    a, b = shape.alpha, shape.beta
    if x == 0.0:
        if a < 1.0:
            return math.inf
        return b if a == 1.0 else 0.0
    if x == 1.0:
        if b < 1.0:
            return math.inf
        return a if b == 1.0 else 0.0
    t = (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - _log_complete_beta(shape)
    if t > _EXP_CAP:
        return math.inf
    return math.exp(t)


def _bisect_inverse(p: float, shape: BetaShape) -> float:
    # invariant: I(lo) < p <= I(hi); geometric midpoints cross subnormal scales
    a, b = shape.alpha, shape.beta
    lo, hi = 0.0, 1.0
    for _ in range(_BISECT_ITERS):
        floor = max(lo, _TINY)
        if hi / floor > 4.0:
            mid = math.sqrt(floor * hi)
        else:
            mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if float(betainc(a, b, mid)) < p:
            lo = mid
        else:
            hi = mid
    rl = abs(float(betainc(a, b, lo)) - p)
    rh = abs(float(betainc(a, b, hi)) - p)
    return lo if rl <= rh else hi


def inv_reg_inc_beta(p: float, shape: BetaShape) -> float:
    """Inverse CDF: the x with I(x) = p, residual-checked.

    scipy's inverse is accepted only when its p-residual is at most 1e-12;
    otherwise bisection tightens the bracket until the endpoints are
    adjacent floats and returns the endpoint with the smaller residual,
    which is the best any double can do.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    x = float(betaincinv(shape.alpha, shape.beta, p))
    if math.isnan(x) or not 0.0 <= x <= 1.0:
        return _bisect_inverse(p, shape)
    if abs(float(betainc(shape.alpha, shape.beta, x)) - p) <= _INV_RESIDUAL_TOL:
        return x
    return _bisect_inverse(p, shape)


def cdf_log_deriv(x: float, shape: BetaShape) -> float:
    """J(x) = I'(x)/I(x), positive on (0, 1); +inf where I underflows."""
    if not 0.0 < x < 1.0:
        raise ValueError(f"x must lie in (0, 1), got {x}")
    value = float(betainc(shape.alpha, shape.beta, x))
    if value <= 0.0:
        return math.inf
    return reg_inc_beta_deriv(x, shape) / value


def density_log_deriv(x: float, shape: BetaShape) -> float:
    """h(x) = (alpha-1)/x - (beta-1)/(1-x), log-slope of the density."""
    if not 0.0 < x < 1.0:
        raise ValueError(f"x must lie in (0, 1), got {x}")
    return (shape.alpha - 1.0) / x - (shape.beta - 1.0) / (1.0 - x)


def curvature_factor(x: float, shape: BetaShape) -> float:
    """3*J(x) - 2*h(x); positive exactly where the core branch is convex."""
    return 3.0 * cdf_log_deriv(x, shape) - 2.0 * density_log_deriv(x, shape)
