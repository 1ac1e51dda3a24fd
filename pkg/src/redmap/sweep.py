"""Orbit simulation, attractor summaries, bifurcation diagrams, and
(alpha, beta)-plane robustness maps.

Diagram stepping is vectorized across grid points with the same arithmetic
expression as the scalar map, so a vectorized orbit is bit-identical to
iterating map_f. Robustness maps parallelize over rows of the shape plane.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass
from multiprocessing import get_context
from typing import Optional

import numpy as np
from scipy.special import betainc

from .betafn import BetaShape
from .equilibrium import fixed_point
from .model import (
    ControlParams,
    DerivedModel,
    MapRangeError,
    ModelError,
    SystemParams,
    derive_model,
    derive_model_at,
    map_f,
)

_AXES = ("w", "a1", "a2")
_CYCLE_CAP = 16
_MIN_SAMPLES = 50

PSTAR_BIN = 0.015
WBIF_BIN = 0.15


@dataclass(frozen=True)
class Orbit:
    """Post-transient trajectory of one initial condition."""

    samples: np.ndarray
    q0: float
    total_steps: int
    transient: int


@dataclass(frozen=True)
class AttractorSummary:
    """What the tail of an orbit settled on.

    kind is "fixed_point", "cycle", or "aperiodic"; period is 1, the cycle
    length, or 0; points are the cluster centers in increasing order;
    spread is the widest cluster's extent.
    """

    kind: str
    period: int
    points: tuple
    spread: float


@dataclass(frozen=True)
class SweepTable:
    """Long-form table with a fixed column tuple; missing cells are None."""

    axis_names: tuple
    rows: tuple


def simulate_orbit(m: DerivedModel, q0: float, total: int,
                   transient: int) -> Orbit:
    """Iterate the map from q0, keeping the final total - transient states."""
    b = m.b
    if not 0.0 <= q0 <= b:
        raise ValueError(f"q0 must lie in [0, {b}], got {q0}")
    if not 0 <= transient < total:
        raise ValueError("need 0 <= transient < total")
    q = float(q0)
    out = np.empty(total - transient)
    k = 0
    for n in range(total):
        q = map_f(q, m)
        if n >= transient:
            out[k] = q
            k += 1
    return Orbit(samples=out, q0=float(q0), total_steps=total,
                 transient=transient)


def summarize_attractor(orbit: Orbit, tol: float) -> AttractorSummary:
    """Cluster the samples at tolerance tol and test periodic revisiting."""
    s = orbit.samples
    if len(s) < _MIN_SAMPLES:
        raise ValueError(f"need at least {_MIN_SAMPLES} post-transient samples, "
                         f"got {len(s)}")
    order = np.sort(s)
    gaps = np.flatnonzero(np.diff(order) > tol)
    bounds = np.concatenate(([0], gaps + 1, [len(order)]))
    centers = []
    spread = 0.0
    for i in range(len(bounds) - 1):
        chunk = order[bounds[i]:bounds[i + 1]]
        centers.append(float(chunk.mean()))
        spread = max(spread, float(chunk[-1] - chunk[0]))
    k = len(centers)
    if k == 1:
        return AttractorSummary("fixed_point", 1, tuple(centers), spread)
    if k > _CYCLE_CAP:
        return AttractorSummary("aperiodic", 0, tuple(centers), spread)
    c = np.asarray(centers)
    idx = np.abs(s[:, None] - c[None, :]).argmin(axis=1)
    if np.any(np.abs(s - c[idx]) > tol):
        return AttractorSummary("aperiodic", 0, tuple(centers), spread)
    head = idx[:k]
    if len(set(head.tolist())) != k or np.any(idx[k:] != idx[:-k]):
        return AttractorSummary("aperiodic", 0, tuple(centers), spread)
    return AttractorSummary("cycle", k, tuple(centers), spread)


def _model_for_axis(system: SystemParams, control: ControlParams, axis: str,
                    value: float) -> DerivedModel:
    if axis == "w":
        return derive_model_at(system, control, w=float(value))
    if axis == "a1":
        return derive_model_at(system, control, a1=float(value))
    return derive_model_at(system, control, a2=float(value))


def _step_array(q, w, a1, a2, nu, qmin, tl, tr, b, alpha, beta):
    # identical expression forms to map_f, branch by branch, so vector and
    # scalar iterates agree bitwise
    z = np.clip(nu * (q - qmin), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ib = betainc(alpha, beta, z)
        core = (1.0 - w) * q + w * (a1 / np.sqrt(ib) - a2)
    left = (1.0 - w) * q + w * b
    right = (1.0 - w) * q
    out = np.where(q <= tl, left, np.where(q < tr, core, right))
    bad = (out < -1e-9 * b) | (out > b * (1.0 + 1e-9)) | ~np.isfinite(out)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise MapRangeError(f"map image {out[i]} outside [0, {b[i]}] "
                            f"at q = {q[i]}")
    return np.minimum(np.maximum(out, 0.0), b)


def _orbit_block(models, q0: float, total: int, transient: int) -> np.ndarray:
    n = len(models)
    if n == 0:
        return np.empty((0, total - transient))
    shape = models[0].control.shape
    assert all(mm.control.shape == shape for mm in models)
    w = np.array([mm.control.w for mm in models])
    a1 = np.array([mm.a1 for mm in models])
    a2 = np.array([mm.a2 for mm in models])
    nu = np.array([mm.nu for mm in models])
    qmin = np.array([mm.control.q_min for mm in models])
    tl = np.array([mm.theta_l for mm in models])
    tr = np.array([mm.theta_r for mm in models])
    b = np.array([mm.b for mm in models])
    q = np.full(n, float(q0))
    out = np.empty((n, total - transient))
    for step in range(total):
        q = _step_array(q, w, a1, a2, nu, qmin, tl, tr, b,
                        shape.alpha, shape.beta)
        if step >= transient:
            out[:, step - transient] = q
    return out


def bifurcation_diagram(system: SystemParams, control: ControlParams,
                        axis: str, value_range, grid: int,
                        total: int = 550, transient: int = 500,
                        q0: Optional[float] = None) -> SweepTable:
    """Long-form table (axis value, q sample, valid flag) over a grid.

    Grid points with invalid parameters become single flagged rows instead
    of aborting the figure. Columns: (axis, "q", "valid").
    """
    axis = str(axis).lower()
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {_AXES}, got {axis!r}")
    lo, hi = float(value_range[0]), float(value_range[1])
    if not lo < hi:
        raise ValueError(f"empty axis range [{lo}, {hi}]")
    if not 0 <= transient < total:
        raise ValueError("need 0 <= transient < total")
    if q0 is None:
        q0 = 0.5 * system.buffer
    if not 0.0 <= q0 <= system.buffer:
        raise ValueError(f"q0 must lie in [0, {system.buffer}], got {q0}")
    values = np.linspace(lo, hi, int(grid))
    models = []
    for v in values:
        try:
            models.append(_model_for_axis(system, control, axis, float(v)))
        except (ModelError, ValueError):
            models.append(None)
    block = _orbit_block([mm for mm in models if mm is not None],
                         q0, total, transient)
    rows = []
    j = 0
    for i, v in enumerate(values):
        if models[i] is None:
            rows.append((float(v), None, 0))
            continue
        for s in block[j]:
            rows.append((float(v), float(s), 1))
        j += 1
    return SweepTable((axis, "q", "valid"), tuple(rows))


def _observable_row(task) -> list:
    system, control, alpha, betas, observable = task
    out = []
    for bv in betas:
        beta = float(bv)
        try:
            ctl = dataclasses.replace(control, shape=BetaShape(alpha, beta))
            mm = derive_model(system, ctl)
            eq = fixed_point(mm)
            if observable == "pstar":
                val = eq.drop_cdf * ctl.p_max
                out.append((alpha, beta, val, math.floor(val / PSTAR_BIN)))
            else:
                if math.isfinite(eq.m_slope) and eq.m_slope > 0.0:
                    wb = 2.0 / eq.m_slope
                else:
                    wb = 0.0
                out.append((alpha, beta, wb, math.floor(wb / WBIF_BIN),
                            1 if wb >= 1.0 else 0))
        except (ModelError, ValueError, ArithmeticError):
            if observable == "pstar":
                out.append((alpha, beta, None, None))
            else:
                out.append((alpha, beta, None, None, None))
    return out


def robustness_map(system: SystemParams, control: ControlParams,
                   alpha_range, beta_range, grid: int, observable: str,
                   jobs: int = 1, endpoint: bool = False) -> SweepTable:
    """Scalar field over the shape plane, one row per (alpha, beta) cell.

    observable "pstar" is the steady-state drop probability I(z*)*p_max;
    "wbif" is the destabilizing weight 2/m (values >= 1 are additionally
    flagged as no_bifurcation). Cells where the model or equilibrium is
    unavailable become missing markers. Rows are sorted by (alpha, beta).
    """
    if observable not in ("pstar", "wbif"):
        raise ValueError(f"observable must be 'pstar' or 'wbif', got {observable!r}")
    alphas = np.linspace(float(alpha_range[0]), float(alpha_range[1]),
                         int(grid), endpoint=endpoint)
    betas = np.linspace(float(beta_range[0]), float(beta_range[1]),
                        int(grid), endpoint=endpoint)
    tasks = [(system, control, float(a), betas, observable) for a in alphas]
    if jobs and int(jobs) > 1:
        ctx = get_context("fork")
        with ctx.Pool(processes=int(jobs)) as pool:
            chunks = pool.map(_observable_row, tasks, chunksize=8)
    else:
        chunks = [_observable_row(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    if observable == "pstar":
        names = ("alpha", "beta", "pstar", "bin")
    else:
        names = ("alpha", "beta", "wbif", "bin", "no_bifurcation")
    return SweepTable(names, tuple(rows))


def _format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return f"{v:.10g}"
    return str(v)


def write_csv(table: SweepTable, target) -> None:
    """RFC-4180 CSV with a single header line; missing cells are empty."""
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "w", newline="") as fh:
            write_csv(table, fh)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(table.axis_names)
    for row in table.rows:
        writer.writerow([_format_cell(v) for v in row])


def write_jsonl(table: SweepTable, target) -> None:
    """One JSON object per row; missing cells are null."""
    if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
        with open(target, "w") as fh:
            write_jsonl(table, fh)
        return
    for row in table.rows:
        obj = {}
        for name, v in zip(table.axis_names, row):
            if isinstance(v, float):
                obj[name] = None if math.isnan(v) else float(f"{v:.10g}")
            else:
                obj[name] = v
        target.write(json.dumps(obj) + "\n")


def table_to_csv_text(table: SweepTable) -> str:
    buf = io.StringIO()
    write_csv(table, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class SweepPreset:
    """A reproducible figure recipe: either a diagram or a shape-plane map."""

    name: str
    kind: str                      # "diagram" | "map"
    system: SystemParams
    control: ControlParams
    axis: Optional[str] = None
    value_range: Optional[tuple] = None
    grid: int = 2000
    total: int = 550
    transient: int = 500
    observable: Optional[str] = None
    alpha_range: Optional[tuple] = None
    beta_range: Optional[tuple] = None


def _base_control(shape: BetaShape) -> ControlParams:
    return ControlParams(p_max=1.0, q_min=500.0, q_max=1500.0, w=0.15,
                         shape=shape)


def get_preset(name: str, shape: Optional[BetaShape] = None,
               observable: Optional[str] = None) -> SweepPreset:
    """Named desk-scale sweep configurations.

    fig3: diagram over a1 in [0, 2500]; fig4: diagram over a2 in
    [4000, 7000]; fig5: diagram over w in [0, 1]; fig6: shape-plane map
    on [0.002, 1.5)^2 with 400 cells per side.
    """
    if shape is None:
        shape = BetaShape(1.0, 1.0)
    control = _base_control(shape)
    if name == "fig3":
        system = SystemParams(connections=1850.0, tcp_constant=1.2247,
                              capacity=321000.0, delay=0.012,
                              packet_size=1.0, buffer=2000.0)
        return SweepPreset(name, "diagram", system, control, axis="a1",
                           value_range=(0.0, 2500.0))
    if name == "fig4":
        system = SystemParams(connections=1850.0, tcp_constant=1.2247,
                              capacity=321000.0, delay=0.012,
                              packet_size=1.0, buffer=2000.0)
        return SweepPreset(name, "diagram", system, control, axis="a2",
                           value_range=(4000.0, 7000.0))
    if name == "fig5":
        system = SystemParams(connections=1850.0, tcp_constant=1.225,
                              capacity=321000.0, delay=0.012,
                              packet_size=1.0, buffer=2000.0)
        return SweepPreset(name, "diagram", system, control, axis="w",
                           value_range=(0.0, 1.0))
    if name == "fig6":
        system = SystemParams(connections=1850.0, tcp_constant=1.225,
                              capacity=321000.0, delay=0.012,
                              packet_size=1.0, buffer=2000.0)
        return SweepPreset(name, "map", system, control, grid=400,
                           observable=observable or "pstar",
                           alpha_range=(0.002, 1.5), beta_range=(0.002, 1.5))
    raise ValueError(f"unknown preset {name!r}; expected fig3, fig4, fig5, fig6")


PRESETS = ("fig3", "fig4", "fig5", "fig6")


def run_preset(preset: SweepPreset, grid: Optional[int] = None,
               total: Optional[int] = None, transient: Optional[int] = None,
               q0: Optional[float] = None, jobs: int = 1) -> SweepTable:
    if preset.kind == "diagram":
        return bifurcation_diagram(
            preset.system, preset.control, preset.axis, preset.value_range,
            grid or preset.grid, total or preset.total,
            transient if transient is not None else preset.transient, q0)
    return robustness_map(preset.system, preset.control, preset.alpha_range,
                          preset.beta_range, grid or preset.grid,
                          preset.observable, jobs=jobs, endpoint=False)
