"""Piecewise queue-averaging map: parameters, derived constants, evaluation.

The map acts on the averaged queue length q in [0, B]. Below theta_l no
packet is dropped and the average is pulled toward the full buffer; above
theta_r every packet is dropped and the average decays geometrically; in
between the drop probability follows a beta-CDF profile, which makes the
middle branch A1/sqrt(I(z)) - A2 in the normalized coordinate
z = nu*(q - q_min).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

from .betafn import (
    BetaShape,
    curvature_factor,
    inv_reg_inc_beta,
    reg_inc_beta,
    reg_inc_beta_deriv,
)

K_MAX = math.sqrt(8.0 / 3.0)

_RANGE_SLACK = 1e-9     # relative slack before an out-of-range image is an error


class ModelError(Exception):
    """Base class for model construction and evaluation failures."""


class ConstraintViolation(ModelError):
    """Parameters admit no valid dynamical core (A1 >= A2 + B)."""


class MapRangeError(ModelError):
    """Computed image left [0, B]; indicates an internal inconsistency."""


@dataclass(frozen=True)
class SystemParams:
    """Physical network constants.

    connections: number of long-lived flows sharing the link (N)
    tcp_constant: throughput constant in [1, sqrt(8/3)] (K)
    capacity: link capacity in kB/s (C)
    delay: round-trip delay in seconds (d)
    packet_size: mean packet size in kB (M)
    buffer: buffer size in packets (B)
    """

    connections: float
    tcp_constant: float
    capacity: float
    delay: float
    packet_size: float
    buffer: float

    def __post_init__(self):
        for name in ("connections", "tcp_constant", "capacity", "delay",
                     "packet_size", "buffer"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if not 1.0 <= self.tcp_constant <= K_MAX:
            raise ValueError(
                f"tcp_constant must lie in [1, {K_MAX:.6f}], got {self.tcp_constant}")


@dataclass(frozen=True)
class ControlParams:
    """Tunable queue-management knobs.

    p_max: drop probability ceiling, in (0, 1]
    q_min, q_max: drop thresholds, 0 <= q_min < q_max <= B
    w: averaging weight, in (0, 1)
    shape: beta-CDF profile of the drop probability
    """

    p_max: float
    q_min: float
    q_max: float
    w: float
    shape: BetaShape

    def __post_init__(self):
        if not (isinstance(self.p_max, (int, float)) and 0.0 < self.p_max <= 1.0):
            raise ValueError(f"p_max must lie in (0, 1], got {self.p_max!r}")
        if not (isinstance(self.q_min, (int, float)) and math.isfinite(self.q_min)
                and self.q_min >= 0.0):
            raise ValueError(f"q_min must be nonnegative and finite, got {self.q_min!r}")
        if not (isinstance(self.q_max, (int, float)) and math.isfinite(self.q_max)
                and self.q_max > self.q_min):
            raise ValueError(f"q_max must exceed q_min, got {self.q_max!r}")
        if not (isinstance(self.w, (int, float)) and 0.0 < self.w < 1.0):
            raise ValueError(f"w must lie in (0, 1), got {self.w!r}")
        if not isinstance(self.shape, BetaShape):
            raise ValueError(f"shape must be a BetaShape, got {self.shape!r}")


@dataclass(frozen=True)
class DerivedModel:
    """Validated, ready-to-evaluate map with its derived constants.

    z_l and z_r are stored from the inverse-CDF solve itself rather than
    recomputed from theta_l/theta_r, so they survive float64 absorption
    when the thresholds collapse onto q_min/q_max for extreme shapes.
    """

    system: SystemParams
    control: ControlParams
    a1: float
    a2: float
    nu: float
    p1: float
    p2: float
    z_l: float
    z_r: float
    theta_l: float
    theta_r: float
    continuous_at_theta_r: bool
    has_fixed_point: bool

    @property
    def b(self) -> float:
        return self.system.buffer

    @property
    def span(self) -> float:
        return self.control.q_max - self.control.q_min

    @property
    def jump(self) -> float:
        """Discontinuity height (A1 - A2)^+ at theta_r."""
        return max(self.a1 - self.a2, 0.0)

    def z_of_q(self, q: float) -> float:
        return self.nu * (q - self.control.q_min)

    def q_of_z(self, z: float) -> float:
        return self.control.q_min + self.span * z


def derive_model(system: SystemParams, control: ControlParams) -> DerivedModel:
    """Resolve thresholds and constants, rejecting invalid parameter sets."""
    if control.q_max > system.buffer:
        raise ValueError(
            f"q_max = {control.q_max} must not exceed the buffer {system.buffer}")
    a1 = system.connections * system.tcp_constant / math.sqrt(control.p_max)
    a2 = system.capacity * system.delay / system.packet_size
    if not a1 < a2 + system.buffer:
        raise ConstraintViolation(
            f"no valid dynamical core: A1 = {a1:.6g} must stay below "
            f"A2 + B = {a2 + system.buffer:.6g}")
    span = control.q_max - control.q_min
    nu = 1.0 / span
    p1 = (a1 / (a2 + system.buffer)) ** 2
    p2 = (a1 / a2) ** 2
    z_l = inv_reg_inc_beta(p1, control.shape)
    z_r = inv_reg_inc_beta(p2, control.shape) if p2 <= 1.0 else 1.0
    theta_l = control.q_min + span * z_l
    theta_r = control.q_max if z_r == 1.0 else control.q_min + span * z_r
    return DerivedModel(
        system=system, control=control, a1=a1, a2=a2, nu=nu, p1=p1, p2=p2,
        z_l=z_l, z_r=z_r, theta_l=theta_l, theta_r=theta_r,
        continuous_at_theta_r=(a1 <= a2),
        has_fixed_point=(a1 < a2 + control.q_max))


def _clip_z(m: DerivedModel, q: float) -> float:
    return min(max(m.nu * (q - m.control.q_min), 0.0), 1.0)


def map_f(q: float, m: DerivedModel) -> float:
    """One application of the piecewise map.

    The image provably stays in [0, B]; a violation beyond 1e-9*B raises
    MapRangeError instead of being clamped silently.
    """
    b = m.system.buffer
    if not 0.0 <= q <= b:
        raise ValueError(f"q must lie in [0, {b}], got {q}")
    w = m.control.w
    if q <= m.theta_l:
        out = (1.0 - w) * q + w * b
    elif q < m.theta_r:
        ib = reg_inc_beta(_clip_z(m, q), m.control.shape)
        if ib <= 0.0:
            raise MapRangeError(f"drop CDF underflowed to 0 inside the core at q = {q}")
        out = (1.0 - w) * q + w * (m.a1 / math.sqrt(ib) - m.a2)
    else:
        out = (1.0 - w) * q
    tol = _RANGE_SLACK * b
    if not -tol <= out <= b + tol:
        raise MapRangeError(f"map image {out} outside [0, {b}] at q = {q}")
    return min(max(out, 0.0), b)


def map_f_left_limit(m: DerivedModel) -> float:
    """Limit of f from the left at theta_r: (1-w)*theta_r + w*(A1-A2)^+."""
    return (1.0 - m.control.w) * m.theta_r + m.control.w * m.jump


def _core_slope(m: DerivedModel, z: float) -> float:
    # -inf sentinel when the density blows up (or I underflows): the slope
    # has no finite one-sided value there
    ib = reg_inc_beta(z, m.control.shape)
    de = reg_inc_beta_deriv(z, m.control.shape)
    if ib <= 0.0 or math.isinf(de):
        return -math.inf
    return 1.0 - m.control.w * (1.0 + 0.5 * m.nu * m.a1 * ib ** -1.5 * de)


def f_prime(q: float, m: DerivedModel) -> float:
    """Derivative of the map away from the two thresholds."""
    b = m.system.buffer
    if not 0.0 <= q <= b:
        raise ValueError(f"q must lie in [0, {b}], got {q}")
    if q == m.theta_l or q == m.theta_r:
        raise ValueError("derivative is one-sided at the thresholds; use "
                         "f_prime_right_theta_l / f_prime_left_theta_r")
    if q < m.theta_l or q > m.theta_r:
        return 1.0 - m.control.w
    return _core_slope(m, _clip_z(m, q))


def f_prime_right_theta_l(m: DerivedModel) -> float:
    """One-sided derivative entering the core at theta_l; always below 1-w."""
    return _core_slope(m, m.z_l)


def f_prime_left_theta_r(m: DerivedModel) -> float:
    """One-sided derivative leaving the core at theta_r.

    When theta_r = q_max the exact limit depends on the density at 1:
    finite for beta >= 1 (equal to 1-w only when beta > 1), -inf for
    beta < 1.
    """
    return _core_slope(m, m.z_r)


def f_second(q: float, m: DerivedModel) -> float:
    """Second derivative on the open core (theta_l, theta_r)."""
    if not m.theta_l < q < m.theta_r:
        raise ValueError(f"second derivative is defined on the open core only, got {q}")
    z = _clip_z(m, q)
    ib = reg_inc_beta(z, m.control.shape)
    de = reg_inc_beta_deriv(z, m.control.shape)
    if ib <= 0.0 or math.isinf(de):
        return math.inf
    return (0.25 * m.control.w * m.nu ** 2 * m.a1 * ib ** -1.5 * de
            * curvature_factor(z, m.control.shape))


def envelope_bounds(q: float, m: DerivedModel) -> tuple[float, float]:
    """Strict lower/upper envelopes of the core branch at q."""
    if not m.theta_l < q < m.theta_r:
        raise ValueError(f"envelopes are defined on the open core only, got {q}")
    w = m.control.w
    base = (1.0 - w) * q
    return base + w * m.jump, base + w * m.system.buffer


def w_mon(m: DerivedModel) -> float:
    """Weight threshold separating increasing from decreasing core branches
    when the branch is monotone (endpoint comparison f(theta_l+) vs
    f(theta_r-)); not a monotonicity test by itself."""
    gap = m.theta_r - m.theta_l
    return gap / (gap + m.system.buffer - m.jump)


def w_inv(m: DerivedModel) -> float:
    """Largest weight keeping the core invariant for decreasing branches.

    Returns 0.0 when the discontinuity height reaches theta_r's level
    (only possible without a fixed point)."""
    gap = m.theta_r - m.theta_l
    first = gap / (m.system.buffer - m.theta_l)
    denom = m.theta_r - m.jump
    if denom <= 0.0:
        return 0.0
    return min(first, gap / denom)


_CONFIG_KEYS = ("N", "K", "C", "d", "M", "B", "p_max", "q_min", "q_max", "w",
                "alpha", "beta")


def params_from_config(cfg: dict) -> tuple[SystemParams, ControlParams]:
    """Validate a flat 12-key dict (N, K, C, d, M, B, p_max, q_min, q_max,
    w, alpha, beta) into parameter records; unknown keys are rejected."""
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    unknown = sorted(set(cfg) - set(_CONFIG_KEYS))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in _CONFIG_KEYS if k not in cfg]
    if missing:
        raise ValueError(f"missing config keys: {', '.join(missing)}")
    vals = {}
    for k in _CONFIG_KEYS:
        v = cfg[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"config key {k} must be a number, got {v!r}")
        vals[k] = float(v)
    system = SystemParams(connections=vals["N"], tcp_constant=vals["K"],
                          capacity=vals["C"], delay=vals["d"],
                          packet_size=vals["M"], buffer=vals["B"])
    control = ControlParams(p_max=vals["p_max"], q_min=vals["q_min"],
                            q_max=vals["q_max"], w=vals["w"],
                            shape=BetaShape(vals["alpha"], vals["beta"]))
    return system, control


def params_to_config(system: SystemParams, control: ControlParams) -> dict:
    return {
        "N": system.connections, "K": system.tcp_constant, "C": system.capacity,
        "d": system.delay, "M": system.packet_size, "B": system.buffer,
        "p_max": control.p_max, "q_min": control.q_min, "q_max": control.q_max,
        "w": control.w, "alpha": control.shape.alpha, "beta": control.shape.beta,
    }


def load_params(path) -> tuple[SystemParams, ControlParams]:
    with open(path) as fh:
        cfg = json.load(fh)
    return params_from_config(cfg)


def connections_for_a1(a1: float, tcp_constant: float, p_max: float) -> float:
    """Back-solve the flow count so that N*K/sqrt(p_max) equals a1."""
    return a1 * math.sqrt(p_max) / tcp_constant


def delay_for_a2(a2: float, capacity: float, packet_size: float) -> float:
    """Back-solve the round-trip delay so that C*d/M equals a2."""
    return a2 * packet_size / capacity


def derive_model_at(system: SystemParams, control: ControlParams, *,
                    a1: float | None = None, a2: float | None = None,
                    w: float | None = None,
                    shape: BetaShape | None = None) -> DerivedModel:
    """Rebuild the model with selected quantities overridden.

    a1/a2 overrides are realized by back-solving connections/delay so the
    parameter records stay self-consistent."""
    if a1 is not None:
        system = dataclasses.replace(
            system,
            connections=connections_for_a1(a1, system.tcp_constant, control.p_max))
    if a2 is not None:
        system = dataclasses.replace(
            system, delay=delay_for_a2(a2, system.capacity, system.packet_size))
    updates = {}
    if w is not None:
        updates["w"] = w
    if shape is not None:
        updates["shape"] = shape
    if updates:
        control = dataclasses.replace(control, **updates)
    return derive_model(system, control)
