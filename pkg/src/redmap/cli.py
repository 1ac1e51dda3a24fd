"""Command-line interface: inspect, equilibrium, certify, sweep.

Exit codes are a stable contract: 0 success (certify: globally stable),
2 invalid parameters or arguments, 3 no fixed point, 4 certification
undecided, 5 certified unstable. All numbers print with 10 significant
digits.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .betafn import BetaShape
from .equilibrium import (
    NoFixedPoint,
    NonConvergence,
    a1_bifurcation,
    a2_bifurcation,
    fixed_point,
    w_bifurcation,
)
from .model import (
    ConstraintViolation,
    derive_model,
    load_params,
    w_inv,
    w_mon,
)
from .stability import Verdict, certify_global_stability
from .sweep import (
    PRESETS,
    bifurcation_diagram,
    get_preset,
    run_preset,
    write_csv,
    write_jsonl,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_FIXED_POINT = 3
EXIT_UNDECIDED = 4
EXIT_UNSTABLE = 5


def _g(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _emit(pairs, fmt: str, out) -> None:
    if fmt == "json":
        obj = {}
        for k, v in pairs:
            if isinstance(v, float):
                obj[k] = float(f"{v:.10g}") if math.isfinite(v) else None
            else:
                obj[k] = v
        out.write(json.dumps(obj, indent=2) + "\n")
    else:
        for k, v in pairs:
            out.write(f"{k},{_g(v)}\n")


def _open_out(args):
    if args.out:
        return open(args.out, "w"), True
    return sys.stdout, False


def _load(args):
    try:
        system, control = load_params(args.params)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)
    if args.alpha is not None or args.beta is not None:
        shape = BetaShape(args.alpha if args.alpha is not None else control.shape.alpha,
                          args.beta if args.beta is not None else control.shape.beta)
        import dataclasses
        control = dataclasses.replace(control, shape=shape)
    try:
        return derive_model(system, control)
    except ConstraintViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _cmd_inspect(args) -> int:
    m = _load(args)
    pairs = [
        ("a1", m.a1), ("a2", m.a2), ("nu", m.nu),
        ("p1", m.p1), ("p2", m.p2),
        ("theta_l", m.theta_l), ("theta_r", m.theta_r),
        ("continuous_at_theta_r", m.continuous_at_theta_r),
        ("has_fixed_point", m.has_fixed_point),
        ("w_mon", w_mon(m)), ("w_inv", w_inv(m)),
    ]
    out, close = _open_out(args)
    try:
        _emit(pairs, args.format, out)
    finally:
        if close:
            out.close()
    return EXIT_OK


def _cmd_equilibrium(args) -> int:
    m = _load(args)
    try:
        eq = fixed_point(m)
    except NoFixedPoint as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_FIXED_POINT
    pairs = [
        ("q_star", eq.q_star), ("z_star", eq.z_star),
        ("drop_cdf", eq.drop_cdf), ("m_slope", eq.m_slope),
        ("f_prime_at_star", eq.f_prime_at_star),
        ("locally_stable", eq.locally_stable),
    ]
    wb = w_bifurcation(m)
    pairs += [("w_bif", wb.value), ("w_bif_residual", wb.residual)]
    for flag, solver, tag in ((args.a1_bif, a1_bifurcation, "a1_bif"),
                              (args.a2_bif, a2_bifurcation, "a2_bif")):
        if not flag:
            continue
        try:
            bp = solver(m)
        except NonConvergence as exc:
            pairs += [(tag, None), (f"{tag}_error", str(exc)),
                      (f"{tag}_trace_len", len(exc.trace))]
            continue
        pairs += [(tag, bp.value), (f"{tag}_residual", bp.residual),
                  (f"{tag}_iterations", bp.iterations),
                  (f"{tag}_strategy", bp.strategy)]
    out, close = _open_out(args)
    try:
        _emit(pairs, args.format, out)
    finally:
        if close:
            out.close()
    return EXIT_OK


def _cmd_certify(args) -> int:
    m = _load(args)
    cert = certify_global_stability(m)
    out, close = _open_out(args)
    try:
        out.write(json.dumps(cert.to_json_dict(), indent=2) + "\n")
    finally:
        if close:
            out.close()
    if cert.globally_stable is Verdict.YES:
        return EXIT_OK
    if cert.globally_stable is Verdict.NO:
        return EXIT_UNSTABLE
    return EXIT_UNDECIDED


def _parse_range(text: str):
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"range must look like lo:hi, got {text!r}")
    return float(parts[0]), float(parts[1])


def _cmd_sweep(args) -> int:
    shape = None
    if args.alpha is not None or args.beta is not None:
        shape = BetaShape(args.alpha if args.alpha is not None else 1.0,
                          args.beta if args.beta is not None else 1.0)
    try:
        if args.preset:
            preset = get_preset(args.preset, shape=shape,
                                observable=args.observable)
            table = run_preset(preset, grid=args.grid, total=args.total,
                               transient=args.transient, q0=args.q0,
                               jobs=args.jobs)
            title = args.preset
        else:
            if not args.axis or not args.range:
                print("error: need --preset or both --axis and --range",
                      file=sys.stderr)
                return EXIT_INVALID
            if not args.params:
                print("error: custom sweeps need --params", file=sys.stderr)
                return EXIT_INVALID
            m = _load(args)
            rng = _parse_range(args.range)
            table = bifurcation_diagram(
                m.system, m.control, args.axis, rng, args.grid or 200,
                args.total or 550,
                args.transient if args.transient is not None else 500,
                args.q0)
            title = f"{args.axis} sweep"
    except (ValueError, ConstraintViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        if args.format == "json":
            write_jsonl(table, args.out)
        else:
            write_csv(table, args.out)
        if not args.no_plot:
            from . import plots
            png = str(Path(args.out).with_suffix(".png"))
            plots.render_table(table, png, title=title)
            print(f"figure written to {png}", file=sys.stderr)
    else:
        if args.format == "json":
            write_jsonl(table, sys.stdout)
        else:
            write_csv(table, sys.stdout)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="redmap",
        description="Piecewise queue-averaging congestion map toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, params_required=True):
        p.add_argument("--params", required=params_required,
                       help="JSON file with the 12 model keys")
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--alpha", type=float, help="override profile alpha")
        p.add_argument("--beta", type=float, help="override profile beta")

    p = sub.add_parser("inspect", help="derived constants and thresholds")
    common(p)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("equilibrium", help="fixed point and bifurcation values")
    common(p)
    p.add_argument("--a1-bif", action="store_true",
                   help="also solve the a1 crossing")
    p.add_argument("--a2-bif", action="store_true",
                   help="also solve the a2 crossing")
    p.set_defaults(func=_cmd_equilibrium)

    p = sub.add_parser("certify", help="global stability certificate (JSON)")
    common(p)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("sweep", help="bifurcation diagrams and shape-plane maps")
    common(p, params_required=False)
    p.add_argument("--preset", choices=PRESETS,
                   help="named figure recipe (fig3, fig4, fig5, fig6)")
    p.add_argument("--axis", choices=("a1", "a2", "w"),
                   help="diagram axis for custom sweeps")
    p.add_argument("--range", help="axis range lo:hi")
    p.add_argument("--grid", type=int, help="number of grid points")
    p.add_argument("--total", type=int, help="orbit length per grid point")
    p.add_argument("--transient", type=int, help="discarded prefix length")
    p.add_argument("--q0", type=float, help="initial condition (default B/2)")
    p.add_argument("--observable", choices=("pstar", "wbif"),
                   help="map observable for fig6")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for map sweeps")
    p.add_argument("--no-plot", action="store_true",
                   help="skip the figure next to --out")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_INVALID
        return code


if __name__ == "__main__":
    sys.exit(main())
