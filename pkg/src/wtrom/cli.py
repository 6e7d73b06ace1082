"""Command-line entry point.

Exit codes: 0 completed (a diverged run still completes), 1 usage error,
2 scenario validation error, 3 runtime model error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import harness, io
from .errors import BracketInvalid, ParseError, UnknownParameter, ValidationError, WtromError
from .refmodel import NotchFilterDesign
from .scenario import bundled_path, load_scenario

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _scenario(arg: str):
    p = Path(arg)
    if not p.exists():
        b = bundled_path(arg)
        if not b.exists():
            raise UsageError(f"no such scenario file: {arg}")
        p = b
    return load_scenario(p)


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"expected A,B got {text!r}") from None
    return a, b


def _values(text: str) -> list[float]:
    if not text.strip():
        return []
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _fmt_c(z) -> str:
    if z is None:
        return "n/a"
    return f"{z.real:+.10f}{z.imag:+.10f}j  |{abs(z):.10f}| ang {math.degrees(math.atan2(z.imag, z.real)):+.6f} deg"


def cmd_run(args) -> int:
    sc = _scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = harness.run(sc, args.model)
    trs = list(result[:2]) if args.model == "both" else [result]
    for tr in trs:
        path = io.write_trajectory_csv(out / f"{sc.name}_{tr.model}.csv", tr, sc.source_hash, sc.name)
        state = f"diverged at t={tr.diverged_at:.6g} s" if tr.diverged else "completed"
        print(f"{tr.model}: {state}; {len(tr)} samples -> {path}")
    if args.model == "both":
        rep = result[2]
        io.write_report_csv(out / f"{sc.name}_report.csv", rep, sc.source_hash)
        for k, v in rep.as_dict().items():
            print(f"  {k} = {v:.6g}" if isinstance(v, float) else f"  {k} = {v}")
    if args.svg:
        path = io.write_svg(out / f"{sc.name}_{args.model}.svg", trs, title=sc.name)
        print(f"plot -> {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _scenario(args.scenario)
    window = _pair(args.cct_window) if args.cct_window else None
    rows = harness.sweep(sc, args.param, _values(args.values), args.model, window, args.tol, args.workers)
    print(f"{args.param},stable,cct_s")
    for r in rows:
        print(f"{r.value:.10g},{'true' if r.stable else 'false'},{'' if r.cct is None else f'{r.cct:.6f}'}")
    if args.out:
        io.write_sweep_csv(args.out, args.param, rows)
    return EXIT_OK


def cmd_cct(args) -> int:
    sc = _scenario(args.scenario)
    t = harness.cct(sc, _pair(args.window), args.tol, args.model)
    print(f"critical clearing time: {t:.6f} s (fault duration {t - sc.fault.t_on:.6f} s, tol {args.tol:g} s)")
    return EXIT_OK


def cmd_faultcalc(args) -> int:
    sc = _scenario(args.scenario)
    fc = harness.faultcalc(sc)
    c = fc.currents
    print(f"fault: {fc.kind}, zf = {fc.zf_pu:.10g} pu")
    print(f"currents: id = {c.id_pos:.6g}, iq = {c.iq_pos:.6g}, iq_neg = {c.iq_neg:.6g} pu")
    print(f"pre-fault  v+           {_fmt_c(fc.v_pre_pos)}")
    print(f"pre-fault  v-           {_fmt_c(fc.v_pre_neg)}")
    print(f"post-fault v+ closed    {_fmt_c(fc.v_post_pos_closed_form)}")
    print(f"post-fault v+ circuit   {_fmt_c(fc.v_post_pos)}")
    print(f"post-fault v- circuit   {_fmt_c(fc.v_post_neg)}")
    print(f"post-fault v0 circuit   {_fmt_c(fc.v_post_zero)}")
    if fc.check is not None:
        chk = fc.check
        status = "agree" if not chk.disagrees else "DISAGREE"
        regime = "exact regime" if chk.expected_exact else "outside exact regime"
        print(f"closed form vs circuit: rel error {chk.rel_error:.3e} ({status}, {regime})")
    return EXIT_OK


def cmd_notch_bode(args) -> int:
    d = NotchFilterDesign(center=2 * math.pi * args.center, zeta=args.zeta, sample_dt=args.dt)
    if args.out:
        io.write_bode_csv(args.out, d)
        print(f"wrote {args.out}")
    else:
        print("f_hz,magnitude_db,phase_deg")
        for f, m, p in io.notch_bode_table(d):
            print(f"{f:.17g},{m:.17g},{p:.17g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wtrom", description="Converter PLL reduced-order model and reference simulation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate a scenario")
    r.add_argument("scenario")
    r.add_argument("--model", choices=harness.MODELS, default="rom")
    r.add_argument("--out", default=".")
    r.add_argument("--svg", action="store_true", help="also write a plot")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="stability over values of one scenario field")
    s.add_argument("scenario")
    s.add_argument("--param", required=True, help="dotted field path, e.g. fault.zf_ohm")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--model", choices=("rom", "refmodel"), default="rom")
    s.add_argument("--cct-window", help="A,B to also compute the clearing time per value")
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("cct", help="critical clearing time by bisection")
    c.add_argument("scenario")
    c.add_argument("--window", required=True, help="A,B clearing-time bracket in s")
    c.add_argument("--tol", type=float, default=1e-3)
    c.add_argument("--model", choices=("rom", "refmodel"), default="rom")
    c.set_defaults(func=cmd_cct)

    f = sub.add_parser("faultcalc", help="pre/post-fault sequence voltages")
    f.add_argument("scenario")
    f.set_defaults(func=cmd_faultcalc)

    n = sub.add_parser("notch-bode", help="notch filter frequency response as CSV")
    n.add_argument("--zeta", type=float, default=0.02)
    n.add_argument("--center", type=float, default=100.0, help="centre frequency in Hz")
    n.add_argument("--dt", type=float, default=50e-6, help="sample period in s")
    n.add_argument("--out")
    n.set_defaults(func=cmd_notch_bode)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"wtrom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError, UnknownParameter, BracketInvalid) as exc:
        print(f"wtrom: invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BrokenPipeError:
        return EXIT_OK
    except (WtromError, OSError, ArithmeticError) as exc:
        print(f"wtrom: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
