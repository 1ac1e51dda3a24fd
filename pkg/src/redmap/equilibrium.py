"""Equilibrium location, closed forms for beta = 1, and bifurcation solvers.

The core branch has at most one fixed point, determined by
A1/sqrt(I(z*)) = q* + A2 with z* = nu*(q* - q_min); it does not depend on
the averaging weight w. Local stability flips when w crosses 2/m, where
m > 1 is the w-independent slope factor with f'(q*) = 1 - m*w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .betafn import inv_reg_inc_beta, reg_inc_beta, reg_inc_beta_deriv
from .model import DerivedModel, ModelError, derive_model_at, f_prime

_RESIDUAL_RTOL = 1e-8
_TINY = 5e-324
_LOOP_CAP = 500
_LOOP_RTOL = 1e-6
_SCAN_POINTS = 256


class NoFixedPoint(ModelError):
    """The map has no fixed point (A1 >= A2 + q_max)."""


class NonConvergence(ModelError):
    """A bifurcation solver failed; carries the iterate trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


@dataclass(frozen=True)
class Equilibrium:
    """Fixed point of the core branch.

    drop_cdf is I(z_star) as seen by the solver; it is stored rather than
    recomputed so the steady-state drop probability stays accurate even
    when z_star itself rounds to 0 or 1 for extreme shapes.
    """

    q_star: float
    z_star: float
    drop_cdf: float
    m_slope: float
    f_prime_at_star: float
    locally_stable: bool


@dataclass(frozen=True)
class BifurcationPoint:
    """Parameter value where f'(q*) crosses -1.

    parameter is one of "w", "a1", "a2"; residual is |f'(q*) + 1| at the
    reported value; strategy records which solver path produced it.
    """

    parameter: str
    value: float
    residual: float
    iterations: int
    strategy: str


def _bisect_decreasing(fun, lo: float, hi: float, iters: int) -> tuple[float, float]:
    # fun(lo) > 0 > fun(hi); geometric midpoints cross subnormal magnitudes
    for _ in range(iters):
        floor = max(lo, _TINY)
        if hi / floor > 4.0:
            mid = math.sqrt(floor * hi)
        else:
            mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if fun(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _residual_z(m: DerivedModel, z: float) -> float:
    ib = reg_inc_beta(z, m.control.shape)
    if ib <= 0.0:
        return math.inf
    return m.a1 / math.sqrt(ib) - (m.q_of_z(z) + m.a2)


def _finish(m: DerivedModel, z_star: float, drop_cdf: float,
            q_star: float) -> Equilibrium:
    de = reg_inc_beta_deriv(z_star, m.control.shape)
    if drop_cdf <= 0.0 or math.isinf(de):
        m_slope = math.inf
        fp = -math.inf
    else:
        m_slope = 1.0 + 0.5 * m.nu * m.a1 * drop_cdf ** -1.5 * de
        fp = 1.0 - m_slope * m.control.w
    return Equilibrium(q_star=q_star, z_star=z_star, drop_cdf=drop_cdf,
                       m_slope=m_slope, f_prime_at_star=fp,
                       locally_stable=(fp > -1.0))


def fixed_point(m: DerivedModel) -> Equilibrium:
    """Unique equilibrium of the core branch, independent of w.

    Bisects the strictly decreasing residual A1/sqrt(I(z)) - (q + A2) in z.
    When float64 cannot resolve the root there (CDF nearly flat or nearly
    vertical at extreme shapes), the solver bisects the CDF value y = I(z)
    instead, where the residual A1/sqrt(y) - (q(y) + A2) is always well
    conditioned, and reports the fixed point from that value.
    """
    if not m.has_fixed_point:
        raise NoFixedPoint(
            f"A1 = {m.a1:.6g} is not below A2 + q_max = "
            f"{m.a2 + m.control.q_max:.6g}")
    lo, hi = m.z_l, m.z_r
    if lo < hi:
        zlo, zhi = _bisect_decreasing(lambda t: _residual_z(m, t), lo, hi, 200)
        z = 0.5 * (zlo + zhi)
        q = m.q_of_z(z)
        ib = reg_inc_beta(z, m.control.shape)
        if ib > 0.0:
            res = abs(m.a1 / math.sqrt(ib) - (q + m.a2))
            if res <= _RESIDUAL_RTOL * (q + m.a2):
                return _finish(m, z, ib, q)

    def rho(y: float) -> float:
        x = inv_reg_inc_beta(y, m.control.shape)
        return m.a1 / math.sqrt(y) - (m.q_of_z(x) + m.a2)

    ylo, yhi = _bisect_decreasing(rho, m.p1, min(m.p2, 1.0), 200)
    y = 0.5 * (ylo + yhi)
    q = m.a1 / math.sqrt(y) - m.a2
    z = min(max(inv_reg_inc_beta(y, m.control.shape), 0.0), 1.0)
    return _finish(m, z, y, q)


def fixed_point_beta1(m: DerivedModel) -> Equilibrium:
    """Closed-form equilibrium family for beta = 1, where I(x) = x**alpha.

    General alpha reduces to a strictly increasing scalar equation in z;
    alpha = 1 has an explicit sinh-based root and alpha = 2 a quadratic
    one. Used to cross-validate the generic solver.
    """
    shape = m.control.shape
    if shape.beta != 1.0:
        raise ValueError(f"closed forms require beta = 1, got beta = {shape.beta}")
    if not m.has_fixed_point:
        raise NoFixedPoint(
            f"A1 = {m.a1:.6g} is not below A2 + q_max = "
            f"{m.a2 + m.control.q_max:.6g}")
    a = shape.alpha
    base = m.a2 + m.control.q_min
    if a == 1.0:
        # t = sqrt(z) solves the depressed cubic t^3 + nu*base*t - nu*A1 = 0
        p = m.nu * base
        arg = -(3.0 * m.a1 / (2.0 * base)) * math.sqrt(3.0 / p)
        t = -2.0 * math.sqrt(p / 3.0) * math.sinh(math.asinh(arg) / 3.0)
        z = t * t
    elif a == 2.0:
        z = 0.5 * m.nu * (math.sqrt(base * base + 4.0 * m.a1 / m.nu) - base)
    else:
        # phi(z) = z^(a/2+1) + nu*base*z^(a/2) - nu*A1, increasing on (0, 1]
        k = 0.5 * a + 1.0
        c = m.nu * base
        target = m.nu * m.a1

        def phi(z):
            return z ** k + c * z ** (k - 1.0) - target

        zlo, zhi = _bisect_decreasing(lambda t: -phi(t), 0.0, 1.0, 200)
        z = 0.5 * (zlo + zhi)
    q_star = m.q_of_z(z)
    drop = z ** a
    m_slope = 1.0 + 0.5 * a * m.nu * m.a1 * z ** (-0.5 * a - 1.0)
    fp = 1.0 - m_slope * m.control.w
    return Equilibrium(q_star=q_star, z_star=z, drop_cdf=drop, m_slope=m_slope,
                       f_prime_at_star=fp, locally_stable=(fp > -1.0))


def critical_point_beta1(m: DerivedModel) -> float | None:
    """Interior minimum of the core branch for beta = 1, if any.

    The slope vanishes at z_c = (alpha*nu*w*A1 / (2*(1-w)))^(2/(alpha+2));
    returns the corresponding q when z_c falls inside the core, else None.
    """
    shape = m.control.shape
    if shape.beta != 1.0:
        raise ValueError(f"closed form requires beta = 1, got beta = {shape.beta}")
    a = shape.alpha
    w = m.control.w
    z_c = (0.5 * a * m.nu * w * m.a1 / (1.0 - w)) ** (2.0 / (a + 2.0))
    if m.z_l < z_c < m.z_r:
        return m.q_of_z(z_c)
    return None


def w_bifurcation(m: DerivedModel) -> BifurcationPoint:
    """Weight at which the equilibrium slope reaches -1: w = 2/m.

    Values at or above 1 mean the equilibrium never destabilizes for any
    admissible weight; the residual is then algebraic (exactly 0)."""
    eq = fixed_point(m)
    if not math.isfinite(eq.m_slope):
        return BifurcationPoint("w", 0.0, 0.0, 1, "direct")
    value = 2.0 / eq.m_slope
    if 0.0 < value < 1.0:
        probe = derive_model_at(m.system, m.control, w=value)
        residual = abs(f_prime(eq.q_star, probe) + 1.0)
    else:
        residual = 0.0
    return BifurcationPoint("w", value, residual, 1, "direct")


def _stability_margin(m: DerivedModel) -> float:
    """w*m - 2; positive exactly when f'(q*) < -1."""
    eq = fixed_point(m)
    if not math.isfinite(eq.m_slope):
        return math.inf
    return m.control.w * eq.m_slope - 2.0


def _polish_bracket(margin_at, left: float, right: float) -> tuple[float, int]:
    # positive margin on the left end, nonpositive on the right
    count = 0
    for _ in range(200):
        mid = 0.5 * (left + right)
        if mid <= left or mid >= right:
            break
        count += 1
        if margin_at(mid) > 0.0:
            left = mid
        else:
            right = mid
        if right - left <= 1e-13 * right:
            break
    return 0.5 * (left + right), count


def _local_bracket(margin_at, center: float, lo_cap: float, hi_cap: float,
                   positive_below: bool):
    delta = 1e-3 * abs(center)
    for _ in range(30):
        lo = max(center - delta, lo_cap)
        hi = min(center + delta, hi_cap)
        try:
            mlo = margin_at(lo)
            mhi = margin_at(hi)
        except (ModelError, ValueError):
            return None
        if positive_below and mlo > 0.0 >= mhi:
            return lo, hi
        if not positive_below and mlo <= 0.0 < mhi:
            return lo, hi
        delta *= 4.0
        if lo <= lo_cap and hi >= hi_cap:
            return None
    return None


def _scan_bracket(margin_at, grid, positive_below: bool):
    prev = None
    for v in grid:
        v = float(v)
        try:
            cur = margin_at(v)
        except (ModelError, ValueError):
            prev = None
            continue
        if prev is not None:
            pv, pm = prev
            if positive_below and pm > 0.0 >= cur:
                return pv, v
            if not positive_below and pm <= 0.0 < cur:
                return pv, v
        prev = (v, cur)
    return None


def _crossing(m: DerivedModel, parameter: str, margin_at, start: float,
              lo_cap: float, hi_cap: float, positive_below: bool,
              loop_step) -> BifurcationPoint:
    # self-consistent update first; its fixed points are exactly the
    # margin zeros, so a converged loop lands on a crossing
    trace = []
    value = start
    iterations = 0
    converged = False
    for _ in range(_LOOP_CAP):
        iterations += 1
        try:
            nxt = loop_step(value)
        except (ModelError, ValueError) as exc:
            trace.append((value, repr(exc)))
            break
        trace.append((value, nxt))
        if not (math.isfinite(nxt) and lo_cap < nxt < hi_cap):
            break
        if abs(nxt - value) <= _LOOP_RTOL * abs(value):
            value = nxt
            converged = True
            break
        value = nxt

    bracket = None
    strategy = "loop"
    if converged:
        bracket = _local_bracket(margin_at, value, lo_cap, hi_cap, positive_below)
        if bracket is not None:
            strategy = "loop+bisect"
    if bracket is None:
        grid = np.linspace(lo_cap, hi_cap, _SCAN_POINTS)
        if not positive_below:
            # scan upward from the starting value for the loss-of-stability
            # crossing rather than a spurious one below it
            grid = np.linspace(min(start, hi_cap * 0.5), hi_cap, _SCAN_POINTS)
        bracket = _scan_bracket(margin_at, grid, positive_below)
        strategy = "scan+bisect"
    if bracket is None:
        raise NonConvergence(
            f"no admissible {parameter} crossing of the stability margin "
            f"in ({lo_cap:.6g}, {hi_cap:.6g})", trace)
    if positive_below:
        left, right = bracket
    else:
        # reorient so the polishing loop always sees positive-on-the-left
        left, right = bracket
        sol, extra = _polish_bracket(lambda v: -margin_at(v), left, right)
        residual = abs(margin_at(sol))
        return BifurcationPoint(parameter, sol, residual, iterations + extra,
                                strategy)
    sol, extra = _polish_bracket(margin_at, left, right)
    residual = abs(margin_at(sol))
    return BifurcationPoint(parameter, sol, residual, iterations + extra, strategy)


def a1_bifurcation(m: DerivedModel) -> BifurcationPoint:
    """A1 value at which the equilibrium slope crosses -1.

    Stability is lost as A1 decreases through this value: the margin is
    positive below the crossing and negative above it."""
    w = m.control.w

    def margin_at(v):
        return _stability_margin(derive_model_at(m.system, m.control, a1=v))

    def loop_step(v):
        probe = derive_model_at(m.system, m.control, a1=v)
        eq = fixed_point(probe)
        de = reg_inc_beta_deriv(eq.z_star, probe.control.shape)
        if not (0.0 < de < math.inf) or eq.drop_cdf <= 0.0:
            raise NonConvergence(f"degenerate density at A1 = {v:.6g}")
        return (4.0 - 2.0 * w) / (probe.nu * w * eq.drop_cdf ** -1.5 * de)

    hi_cap = (m.a2 + m.control.q_max) * (1.0 - 1e-9)
    lo_cap = hi_cap / 1e6
    return _crossing(m, "a1", margin_at, m.a1, lo_cap, hi_cap, True, loop_step)


def a2_bifurcation(m: DerivedModel) -> BifurcationPoint:
    """A2 value at which the equilibrium slope crosses -1.

    Stability is lost as A2 increases through this value: the margin is
    nonpositive below the crossing and positive above it."""
    w = m.control.w

    def margin_at(v):
        return _stability_margin(derive_model_at(m.system, m.control, a2=v))

    def loop_step(v):
        probe = derive_model_at(m.system, m.control, a2=v)
        eq = fixed_point(probe)
        de = reg_inc_beta_deriv(eq.z_star, probe.control.shape)
        if not (0.0 < de < math.inf) or eq.drop_cdf <= 0.0:
            raise NonConvergence(f"degenerate density at A2 = {v:.6g}")
        return (4.0 - 2.0 * w) / (probe.nu * w * de / eq.drop_cdf) - eq.q_star

    lo_cap = max(m.a1 - m.control.q_max, 0.0) * (1.0 + 1e-9) + 1e-9
    hi_cap = 8.0 * (m.a2 + m.control.q_max + m.system.buffer)
    return _crossing(m, "a2", margin_at, m.a2, lo_cap, hi_cap, False, loop_step)
