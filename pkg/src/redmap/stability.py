"""Shape classification, convexity certificates, invariance checks, and the
global-stability decision cascade.

Every Yes verdict is backed by a full set of sufficient conditions from the
proven criteria; No is issued only on local instability of the equilibrium;
everything else stays Undecided, because the criteria are sufficient, not
necessary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.special import betainc, betaln

from .equilibrium import Equilibrium, NoFixedPoint, fixed_point
from .model import (
    DerivedModel,
    ModelError,
    f_prime,
    f_prime_left_theta_r,
    f_prime_right_theta_l,
    map_f,
    w_inv,
)

_SIGN_TOL = 1e-12
_CONVEXITY_GRID = 2048
_SHAPE_GRID = 4096
_ENDPOINT_REL_TOL = 1e-12
_SMALLEST_NORMAL = 2.2250738585072014e-308


class ShapeKind(str, Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    UNIMODAL_MIN = "unimodal_min"
    UNIMODAL_MAX = "unimodal_max"
    MULTIMODAL = "multimodal"
    INDETERMINATE = "indeterminate"


class ConvexityStatus(str, Enum):
    PROVEN = "proven_convex"
    NUMERIC = "numerically_convex"
    NOT_CONVEX = "not_convex"
    UNKNOWN = "unknown"


class ConvexityRule(str, Enum):
    POWER_LAW = "power_law"                       # beta = 1, closed-form curvature
    DECREASING_DENSITY = "decreasing_density"     # alpha <= 1 <= beta
    LEFT_OF_DENSITY_MIN = "left_of_density_min"   # alpha, beta < 1, core left of it
    RIGHT_OF_DENSITY_MAX = "right_of_density_max"  # alpha, beta > 1, core right of it
    CDF_RATIO_LOW = "cdf_ratio_low"               # alpha <= beta, core below a/(a+b)
    CDF_RATIO_HIGH = "cdf_ratio_high"             # alpha > beta, core below (a+2)/(a+b+4)
    SCAN = "scan"


class Verdict(str, Enum):
    YES = "yes"
    NO = "no"
    UNDECIDED = "undecided"


class StabilityRule(str, Enum):
    INCREASING_MAP = "increasing_map"
    DECREASING_SLOPE_BOUND = "decreasing_slope_bound"
    DECREASING_CONVEX = "decreasing_convex"
    MIN_BEFORE_EQUILIBRIUM = "interior_min_before_equilibrium"
    MIN_AFTER_EQUILIBRIUM_SMALL_JUMP = "interior_min_after_equilibrium_small_jump"
    MIN_AFTER_EQUILIBRIUM_LARGE_JUMP = "interior_min_after_equilibrium_large_jump"
    MIN_AFTER_EQUILIBRIUM_CONVEX = "interior_min_after_equilibrium_convex"
    NONE = "none"


class UnsupportedShape(ModelError):
    """No invariance criterion applies to this shape class."""


def _round10(v) -> Optional[float]:
    if v is None or not math.isfinite(v):
        return None
    return float(f"{v:.10g}")


@dataclass(frozen=True)
class Condition:
    """One checked inequality: value `sense` bound."""

    name: str
    value: float
    bound: float
    passed: bool
    sense: str = "<="

    def to_dict(self) -> dict:
        return {"name": self.name, "value": _round10(self.value),
                "bound": _round10(self.bound), "sense": self.sense,
                "passed": self.passed}


@dataclass(frozen=True)
class ConvexityCertificate:
    status: ConvexityStatus
    rule: ConvexityRule
    z_low: float
    z_high: float

    def to_dict(self) -> dict:
        return {"status": self.status.value, "rule": self.rule.value,
                "z_low": _round10(self.z_low), "z_high": _round10(self.z_high)}


@dataclass(frozen=True)
class ShapeClass:
    kind: ShapeKind
    q_c: Optional[float]
    evidence: str            # "convexity_certificate" | "numeric_scan"

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "q_c": _round10(self.q_c),
                "evidence": self.evidence}


@dataclass(frozen=True)
class InvarianceReport:
    invariant: bool
    conditions: tuple


@dataclass(frozen=True)
class StabilityCertificate:
    globally_stable: Verdict
    theorem: StabilityRule
    conditions_checked: tuple
    two_cycle_endpoint_excluded: bool
    shape: Optional[ShapeClass] = None
    convexity: Optional[ConvexityCertificate] = None
    equilibrium: Optional[Equilibrium] = None
    notes: tuple = ()

    def to_json_dict(self) -> dict:
        out = {
            "globally_stable": self.globally_stable.value,
            "theorem": self.theorem.value,
            "two_cycle_endpoint_excluded": self.two_cycle_endpoint_excluded,
            "conditions_checked": [c.to_dict() for c in self.conditions_checked],
        }
        if self.shape is not None:
            out["shape"] = self.shape.to_dict()
        if self.convexity is not None:
            out["convexity"] = self.convexity.to_dict()
        if self.equilibrium is not None:
            eq = self.equilibrium
            out["equilibrium"] = {
                "q_star": _round10(eq.q_star), "z_star": _round10(eq.z_star),
                "drop_cdf": _round10(eq.drop_cdf), "m_slope": _round10(eq.m_slope),
                "f_prime_at_star": _round10(eq.f_prime_at_star),
                "locally_stable": eq.locally_stable,
            }
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def _curvature_grid(m: DerivedModel, n: int) -> np.ndarray:
    a, b = m.control.shape.alpha, m.control.shape.beta
    z = np.linspace(m.z_l, m.z_r, n + 2)[1:-1]
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        ib = betainc(a, b, z)
        dens = np.exp((a - 1.0) * np.log(z) + (b - 1.0) * np.log1p(-z)
                      - betaln(a, b))
        jj = np.where(ib > 0.0, dens / np.maximum(ib, _SMALLEST_NORMAL), np.inf)
        hh = (a - 1.0) / z - (b - 1.0) / (1.0 - z)
        vals = 3.0 * jj - 2.0 * hh
    # degenerate evaluations grade as mixed evidence, never as convex
    return np.where(np.isnan(vals), 0.0, vals)


def certify_convexity(m: DerivedModel) -> ConvexityCertificate:
    """Certificate that the core branch has positive curvature.

    Proven rules cover the whole core z-range by analytic sign arguments
    on 3*J - 2*h; when none applies, a dense scan grades the evidence as
    numeric, not-convex, or unknown.
    """
    a, b = m.control.shape.alpha, m.control.shape.beta
    z_lo, z_hi = m.z_l, m.z_r

    def proven(rule):
        return ConvexityCertificate(ConvexityStatus.PROVEN, rule, z_lo, z_hi)

    if b == 1.0:
        return proven(ConvexityRule.POWER_LAW)
    if a <= 1.0 <= b:
        return proven(ConvexityRule.DECREASING_DENSITY)
    if a < 1.0 and b < 1.0 and z_hi <= (a - 1.0) / (a + b - 2.0):
        return proven(ConvexityRule.LEFT_OF_DENSITY_MIN)
    if a > 1.0 and b > 1.0 and z_lo >= (a - 1.0) / (a + b - 2.0):
        return proven(ConvexityRule.RIGHT_OF_DENSITY_MAX)
    if a <= b and z_hi <= a / (a + b):
        return proven(ConvexityRule.CDF_RATIO_LOW)
    if a > b and z_hi <= (a + 2.0) / (a + b + 4.0):
        return proven(ConvexityRule.CDF_RATIO_HIGH)
    vals = _curvature_grid(m, _CONVEXITY_GRID)
    if np.any(vals < -_SIGN_TOL):
        status = ConvexityStatus.NOT_CONVEX
    elif np.all(vals > _SIGN_TOL):
        status = ConvexityStatus.NUMERIC
    else:
        status = ConvexityStatus.UNKNOWN
    return ConvexityCertificate(status, ConvexityRule.SCAN, z_lo, z_hi)


def _slope_grid(m: DerivedModel, qs: np.ndarray) -> np.ndarray:
    a, b = m.control.shape.alpha, m.control.shape.beta
    z = np.clip(m.nu * (qs - m.control.q_min), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        ib = betainc(a, b, z)
        dens = np.exp((a - 1.0) * np.log(z) + (b - 1.0) * np.log1p(-z)
                      - betaln(a, b))
        vals = 1.0 - m.control.w * (1.0 + 0.5 * m.nu * m.a1
                                    * np.power(ib, -1.5) * dens)
    return np.where(np.isnan(vals) | (ib <= 0.0), -np.inf, vals)


def _slope_root(m: DerivedModel, lo: float, hi: float, rising: bool) -> float:
    # bracket endpoints are never evaluated, only strict midpoints
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if (f_prime(mid, m) < 0.0) == rising:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def classify_shape(m: DerivedModel,
                   convexity: Optional[ConvexityCertificate] = None) -> ShapeClass:
    """Monotonicity profile of the core branch.

    Under a convexity certificate the one-sided slopes at the thresholds
    decide the class outright; otherwise a dense slope scan counts sign
    changes. The -inf sentinel (density blow-up at theta_r for beta < 1)
    counts as a negative slope.
    """
    if convexity is None:
        convexity = certify_convexity(m)
    fl = f_prime_right_theta_l(m)
    fr = f_prime_left_theta_r(m)
    if convexity.status in (ConvexityStatus.PROVEN, ConvexityStatus.NUMERIC):
        if fl > fr + 1e-9:
            # slopes contradict a nondecreasing derivative; do not guess
            return ShapeClass(ShapeKind.INDETERMINATE, None, "convexity_certificate")
        if fl > _SIGN_TOL and fr > _SIGN_TOL:
            return ShapeClass(ShapeKind.INCREASING, None, "convexity_certificate")
        if fl < -_SIGN_TOL and fr < -_SIGN_TOL:
            return ShapeClass(ShapeKind.DECREASING, None, "convexity_certificate")
        if fl < -_SIGN_TOL and fr > _SIGN_TOL:
            q_c = _slope_root(m, m.theta_l, m.theta_r, rising=True)
            return ShapeClass(ShapeKind.UNIMODAL_MIN, q_c, "convexity_certificate")
        return ShapeClass(ShapeKind.INDETERMINATE, None, "convexity_certificate")
    return _classify_by_scan(m, fl, fr)


def _classify_by_scan(m: DerivedModel, fl: float, fr: float) -> ShapeClass:
    qs = np.linspace(m.theta_l, m.theta_r, _SHAPE_GRID + 2)[1:-1]
    slopes = _slope_grid(m, qs)
    seq = np.concatenate(([fl], slopes, [fr]))
    signs = []
    for v in seq:
        s = 1 if v > _SIGN_TOL else (-1 if v < -_SIGN_TOL else 0)
        if s != 0 and (not signs or signs[-1] != s):
            signs.append(s)
    if not signs:
        return ShapeClass(ShapeKind.INDETERMINATE, None, "numeric_scan")
    changes = len(signs) - 1
    if changes == 0:
        kind = ShapeKind.INCREASING if signs[0] > 0 else ShapeKind.DECREASING
        return ShapeClass(kind, None, "numeric_scan")
    if changes == 1:
        rising = signs[0] < 0
        q_c = _scan_turning_point(m, qs, slopes, fl, fr, rising)
        kind = ShapeKind.UNIMODAL_MIN if rising else ShapeKind.UNIMODAL_MAX
        return ShapeClass(kind, q_c, "numeric_scan")
    return ShapeClass(ShapeKind.MULTIMODAL, None, "numeric_scan")


def _scan_turning_point(m, qs, slopes, fl, fr, rising: bool) -> float:
    pts = np.concatenate(([m.theta_l], qs, [m.theta_r]))
    vals = np.concatenate(([fl], slopes, [fr]))
    before = (vals < 0.0) if rising else (vals > 0.0)
    idx = np.flatnonzero(before[:-1] & ~before[1:])
    if len(idx) == 0:
        return float(qs[len(qs) // 2])
    i = int(idx[0])
    return _slope_root(m, float(pts[i]), float(pts[i + 1]), rising)


def _min_slope_grid(m: DerivedModel, lo: float, hi: float,
                    n: int = _SHAPE_GRID) -> float:
    qs = np.linspace(lo, hi, n + 2)[1:-1]
    vals = _slope_grid(m, qs)
    best = float(np.min(vals)) if len(vals) else math.inf
    if lo == m.theta_l:
        best = min(best, f_prime_right_theta_l(m))
    if hi == m.theta_r:
        best = min(best, f_prime_left_theta_r(m))
    return best


def check_invariance(m: DerivedModel, shape: ShapeClass) -> InvarianceReport:
    """Exact invariance criterion for the core interval, by shape class.

    Multimodal and indeterminate shapes have no supported criterion and
    raise UnsupportedShape.
    """
    w = m.control.w
    gap = m.theta_r - m.theta_l
    if shape.kind is ShapeKind.INCREASING:
        c = Condition("jump_below_q_max", m.jump, m.control.q_max,
                      m.jump < m.control.q_max, "<")
        return InvarianceReport(c.passed, (c,))
    if shape.kind is ShapeKind.DECREASING:
        bound = w_inv(m)
        c = Condition("w_below_w_inv", w, bound, w <= bound, "<=")
        return InvarianceReport(c.passed, (c,))
    if shape.kind is ShapeKind.UNIMODAL_MIN:
        if shape.q_c is None:
            raise UnsupportedShape("unimodal shape without a located turning point")
        f_qc = map_f(shape.q_c, m)
        entry = gap / (m.b - m.theta_l)
        cs = (
            Condition("w_keeps_left_peak_in_core", w, entry, w <= entry, "<="),
            Condition("min_image_above_theta_l", f_qc, m.theta_l,
                      f_qc > m.theta_l, ">"),
            Condition("a1_at_most_a2_plus_q_max", m.a1, m.a2 + m.control.q_max,
                      m.a1 <= m.a2 + m.control.q_max, "<="),
        )
        return InvarianceReport(all(c.passed for c in cs), cs)
    if shape.kind is ShapeKind.UNIMODAL_MAX:
        if shape.q_c is None:
            raise UnsupportedShape("unimodal shape without a located turning point")
        f_qc = map_f(shape.q_c, m)
        exit_bound = gap / m.theta_r
        cs = (
            Condition("max_image_below_theta_r", f_qc, m.theta_r,
                      f_qc < m.theta_r, "<"),
            Condition("w_keeps_right_image_in_core", w, exit_bound,
                      w <= exit_bound, "<="),
        )
        return InvarianceReport(all(c.passed for c in cs), cs)
    raise UnsupportedShape(f"no invariance criterion for shape {shape.kind.value}")


def certify_global_stability(m: DerivedModel) -> StabilityCertificate:
    """Decision cascade over the sufficient global-stability criteria."""
    conditions = []
    notes = []
    excluded = abs(m.theta_l + m.theta_r - m.b) > _ENDPOINT_REL_TOL * m.b
    try:
        eq = fixed_point(m)
    except NoFixedPoint:
        conditions.append(Condition("fixed_point_exists", 0.0, 1.0, False, "=="))
        return StabilityCertificate(Verdict.UNDECIDED, StabilityRule.NONE,
                                    tuple(conditions), excluded,
                                    notes=("no fixed point inside the core",))
    conditions.append(Condition("fixed_point_exists", 1.0, 1.0, True, "=="))
    if not excluded:
        conditions.append(Condition("theta_sum_avoids_buffer",
                                    m.theta_l + m.theta_r, m.b, False, "!="))
        return StabilityCertificate(
            Verdict.UNDECIDED, StabilityRule.NONE, tuple(conditions), False,
            equilibrium=eq,
            notes=("theta_l + theta_r = B admits a two-cycle between the "
                   "outer branches",))
    if eq.f_prime_at_star < -1.0:
        conditions.append(Condition("local_stability", eq.f_prime_at_star, -1.0,
                                    False, ">="))
        return StabilityCertificate(Verdict.NO, StabilityRule.NONE,
                                    tuple(conditions), True, equilibrium=eq,
                                    notes=("equilibrium is locally unstable",))
    conditions.append(Condition("local_stability", eq.f_prime_at_star, -1.0,
                                True, ">="))

    convexity = certify_convexity(m)
    shape = classify_shape(m, convexity)
    verdict = None
    rule = StabilityRule.NONE
    gap = m.theta_r - m.theta_l
    entry_bound = gap / (m.b - m.theta_l)
    proven_convex = convexity.status is ConvexityStatus.PROVEN

    if shape.kind is ShapeKind.INCREASING:
        ok = m.a1 < m.a2 + m.control.q_max
        conditions.append(Condition("a1_below_a2_plus_q_max", m.a1,
                                    m.a2 + m.control.q_max, ok, "<"))
        if ok:
            verdict, rule = Verdict.YES, StabilityRule.INCREASING_MAP

    elif shape.kind is ShapeKind.DECREASING:
        bound = w_inv(m)
        w_ok = m.control.w <= bound
        conditions.append(Condition("w_below_w_inv", m.control.w, bound,
                                    w_ok, "<="))
        fl = f_prime_right_theta_l(m)
        if proven_convex:
            d_ok = fl >= -1.0
            conditions.append(Condition("entry_slope_at_least_minus_one", fl,
                                        -1.0, d_ok, ">="))
            if w_ok and d_ok:
                verdict, rule = Verdict.YES, StabilityRule.DECREASING_CONVEX
        if verdict is None and w_ok:
            lo_slope = _min_slope_grid(m, m.theta_l, m.theta_r)
            s_ok = lo_slope > -1.0
            conditions.append(Condition("core_slope_above_minus_one", lo_slope,
                                        -1.0, s_ok, ">"))
            if s_ok:
                verdict, rule = Verdict.YES, StabilityRule.DECREASING_SLOPE_BOUND
                notes.append("slope bound verified on a dense grid, "
                             "not analytically")

    elif shape.kind is ShapeKind.UNIMODAL_MIN and shape.q_c is not None:
        q_c = shape.q_c
        w_entry_ok = m.control.w <= entry_bound
        conditions.append(Condition("w_keeps_left_peak_in_core", m.control.w,
                                    entry_bound, w_entry_ok, "<="))
        if q_c <= eq.q_star:
            a_ok = m.a1 <= m.a2 + m.control.q_max
            conditions.append(Condition("a1_at_most_a2_plus_q_max", m.a1,
                                        m.a2 + m.control.q_max, a_ok, "<="))
            if w_entry_ok and a_ok:
                verdict, rule = Verdict.YES, StabilityRule.MIN_BEFORE_EQUILIBRIUM
        elif m.jump < eq.q_star:
            if proven_convex and math.isfinite(eq.m_slope):
                fl = f_prime_right_theta_l(m)
                d_ok = fl >= -1.0
                conditions.append(Condition("entry_slope_at_least_minus_one",
                                            fl, -1.0, d_ok, ">="))
                relax = max(m.theta_l - m.jump, 0.0) / eq.m_slope
                w1 = min(entry_bound,
                         (eq.q_star - m.theta_l + relax) / (eq.q_star - m.jump))
                w1_ok = m.control.w <= w1
                conditions.append(Condition("w_below_convex_min_bound",
                                            m.control.w, w1, w1_ok, "<="))
                if d_ok and w1_ok:
                    verdict = Verdict.YES
                    rule = StabilityRule.MIN_AFTER_EQUILIBRIUM_CONVEX
            if verdict is None:
                w3 = min(entry_bound,
                         (eq.q_star - m.theta_l) / (eq.q_star - m.jump))
                w3_ok = m.control.w <= w3
                conditions.append(Condition("w_below_min_bound", m.control.w,
                                            w3, w3_ok, "<="))
                lo_slope = _min_slope_grid(m, m.theta_l, q_c)
                s_ok = lo_slope > -1.0
                conditions.append(Condition("left_slope_above_minus_one",
                                            lo_slope, -1.0, s_ok, ">"))
                if w3_ok and s_ok:
                    verdict = Verdict.YES
                    rule = StabilityRule.MIN_AFTER_EQUILIBRIUM_SMALL_JUMP
                    notes.append("slope bound verified on a dense grid, "
                                 "not analytically")
        else:
            # jump at or above q*: left-branch images can overshoot the
            # equilibrium, so only the weaker entry bound applies
            if m.jump == eq.q_star:
                notes.append("discontinuity height exactly at q*; routed to "
                             "the large-jump criterion")
            conditions.append(Condition("jump_below_q_max", m.jump,
                                        m.control.q_max,
                                        m.jump < m.control.q_max, "<"))
            lo_slope = _min_slope_grid(m, m.theta_l, q_c)
            s_ok = lo_slope > -1.0
            conditions.append(Condition("left_slope_above_minus_one", lo_slope,
                                        -1.0, s_ok, ">"))
            if w_entry_ok and s_ok and m.jump < m.control.q_max:
                verdict = Verdict.YES
                rule = StabilityRule.MIN_AFTER_EQUILIBRIUM_LARGE_JUMP
                notes.append("slope bound verified on a dense grid, "
                             "not analytically")

    else:
        notes.append(f"shape {shape.kind.value} has no sufficient criterion")

    if verdict is None:
        verdict = Verdict.UNDECIDED
        rule = StabilityRule.NONE
    return StabilityCertificate(verdict, rule, tuple(conditions), True,
                                shape=shape, convexity=convexity,
                                equilibrium=eq, notes=tuple(notes))
