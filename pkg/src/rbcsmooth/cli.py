"""Command-line front end.

Subcommands: ``lprobust``, ``lpbwselect``, ``kdrobust``, ``kdbwselect`` and
``simulate``. Tables go to standard output; ``--out`` writes lossless JSON
or CSV. Failures print one ``error subcommand=... flag=...: message`` line
to standard error and exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .bandwidth import METHODS, select_bandwidths
from .errors import InvalidInputError, SmoothingError
from .inference import FitSpec, KdeSpec, default_grid, kdrobust, lprobust, summarize
from .kde import KD_METHODS, kd_bandwidth
from .kernels import KernelType
from .lpcore import Sample
from .montecarlo import BW_MODES, DEFAULT_EVALS, SimDesign, run_study
from .variance import VceKind, VceSpec

log = logging.getLogger("rbcsmooth.cli")

KERNELS = tuple(k.value for k in KernelType)
VCES = tuple(k.value for k in VceKind)
FORMATS = ("json", "csv")


class CliError(Exception):
    """An error attributed to one command-line flag."""

    def __init__(self, flag: str, message: str, kind: str = "InvalidInputError"):
        super().__init__(message)
        self.flag = flag
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors follow the one-line error format."""

    def error(self, message):
        sub = self.prog.split()[-1] if " " in self.prog else "-"
        raise CliError("-", f"{message} (subcommand {sub})", "UsageError")


# --------------------------------------------------------------------------
# input


def _number(text: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        return float("nan")


def ingest_csv(path, xcol: str, ycol: Optional[str] = None, clustercol: Optional[str] = None,
               notices: Optional[list] = None):
    """Read a CSV file with a header row.

    Rows whose x (or y, when requested) is blank or non-finite are dropped
    and counted. Returns a :class:`Sample` when ``ycol`` is given and the
    x vector otherwise.
    """
    notices = [] if notices is None else notices
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CliError("--data", f"cannot read {path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise CliError("--data", f"{path} has no header row")
        for flag, col in (("--x", xcol), ("--y", ycol), ("--cluster-col", clustercol)):
            if col is not None and col not in header:
                raise CliError(flag, f"column {col!r} not found; available: {', '.join(header)}")
        xs, ys, cs = [], [], []
        dropped = 0
        for rec in reader:
            xv = _number(rec.get(xcol))
            yv = _number(rec.get(ycol)) if ycol is not None else 0.0
            if not (math.isfinite(xv) and math.isfinite(yv)):
                dropped += 1
                continue
            xs.append(xv)
            ys.append(yv)
            if clustercol is not None:
                cs.append(str(rec.get(clustercol) or ""))
    if dropped:
        notices.append(f"{dropped} row{'s' if dropped != 1 else ''} dropped "
                       "(missing or non-finite values)")
    if not xs:
        raise CliError("--data", f"{path} has no usable rows", "EmptyDataError")
    if ycol is None:
        return np.asarray(xs, dtype=float)
    if len(xs) < 2:
        raise CliError("--data", f"{path} has {len(xs)} usable row; at least 2 are needed")
    cluster = np.asarray(cs, dtype=object) if clustercol is not None else None
    return Sample(np.asarray(xs), np.asarray(ys), cluster)


def _float_list(text: str, flag: str) -> List[float]:
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise CliError(flag, f"expected a comma-separated list of numbers, got {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise CliError(flag, "expected at least one finite number")
    return vals


# --------------------------------------------------------------------------
# parser


def _add_output(sp):
    sp.add_argument("--out", metavar="PATH", help="also write machine-readable results here")
    sp.add_argument("--format", choices=FORMATS,
                    help="format of --out (default from the file suffix, else json); "
                         "without --out, print this format instead of the text table")


def _add_grid(sp):
    sp.add_argument("--eval", metavar="LIST", help="comma-separated evaluation points")
    sp.add_argument("--neval", type=int, default=30,
                    help="number of equally spaced evaluation points (default 30)")
    sp.add_argument("--grid-min", type=float, help="lower end of the default grid")
    sp.add_argument("--grid-max", type=float, help="upper end of the default grid")


def _add_regression(sp, with_estimation: bool):
    sp.add_argument("--data", required=True, metavar="CSV", help="input CSV file with a header")
    sp.add_argument("--x", required=True, metavar="COL", help="regressor column")
    sp.add_argument("--y", required=True, metavar="COL", help="outcome column")
    sp.add_argument("--cluster-col", metavar="COL", help="cluster label column")
    sp.add_argument("--p", type=int, default=1, help="polynomial order (default 1)")
    sp.add_argument("--deriv", type=int, default=0, help="derivative order (default 0)")
    sp.add_argument("--kernel", choices=KERNELS, default="epa", help="kernel (default epa)")
    sp.add_argument("--bwselect", choices=METHODS, default=None,
                    help="bandwidth selector (default imse-dpi)")
    sp.add_argument("--bwcheck", type=int, default=21,
                    help="minimum observations per window, 0 disables (default 21)")
    sp.add_argument("--rho", type=float, default=1.0, help="ratio h/b (default 1)")
    sp.add_argument("--vce", choices=VCES, default="nn", help="variance estimator (default nn)")
    sp.add_argument("--nnmatch", type=int, default=3,
                    help="nearest neighbours for nn residuals (default 3)")
    sp.add_argument("--interior", action="store_true",
                    help="treat every point as interior in the even-order bias")
    if with_estimation:
        sp.add_argument("--h", type=float, help="main bandwidth (skips selection)")
        sp.add_argument("--b", type=float, help="bias-correction bandwidth (default h/rho)")
        sp.add_argument("--level", type=float, default=0.95,
                        help="confidence level (default 0.95)")
    _add_grid(sp)
    _add_output(sp)


def _add_density(sp, with_estimation: bool):
    sp.add_argument("--data", required=True, metavar="CSV", help="input CSV file with a header")
    sp.add_argument("--x", required=True, metavar="COL", help="data column")
    sp.add_argument("--kernel", choices=KERNELS, default="epa", help="kernel (default epa)")
    sp.add_argument("--bwselect", choices=KD_METHODS, default=None,
                    help="bandwidth selector (default imse-dpi)")
    sp.add_argument("--rho", type=float, default=1.0, help="ratio h/b (default 1)")
    if with_estimation:
        sp.add_argument("--h", type=float, help="main bandwidth (skips selection)")
        sp.add_argument("--b", type=float, help="bias-correction bandwidth (default h/rho)")
        sp.add_argument("--level", type=float, default=0.95,
                        help="confidence level (default 0.95)")
    _add_grid(sp)
    _add_output(sp)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rbcsmooth",
                     description="Local polynomial and kernel density estimation with "
                                 "robust bias-corrected confidence intervals.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    _add_regression(sub.add_parser("lprobust", help="local polynomial estimates and intervals"),
                    True)
    _add_regression(sub.add_parser("lpbwselect", help="local polynomial bandwidths"), False)
    _add_density(sub.add_parser("kdrobust", help="density estimates and intervals"), True)
    _add_density(sub.add_parser("kdbwselect", help="density bandwidths"), False)

    sim = sub.add_parser("simulate", help="Monte Carlo study on the built-in design")
    sim.add_argument("--n", type=int, default=500, help="sample size (default 500)")
    sim.add_argument("--reps", type=int, default=5000, help="replications (default 5000)")
    sim.add_argument("--p", type=int, default=1, help="polynomial order (default 1)")
    sim.add_argument("--deriv", type=int, default=0, help="derivative order (default 0)")
    sim.add_argument("--bw", choices=BW_MODES, default="imse-dpi",
                     help="population bandwidth or an estimated one (default imse-dpi)")
    sim.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
    sim.add_argument("--evals", metavar="LIST",
                     default=",".join(f"{e:g}" for e in DEFAULT_EVALS),
                     help="comma-separated evaluation points in [0, 1]")
    sim.add_argument("--vce", choices=VCES, default="nn", help="variance estimator (default nn)")
    sim.add_argument("--kernel", choices=KERNELS, default="epa", help="kernel (default epa)")
    sim.add_argument("--level", type=float, default=0.95, help="confidence level (default 0.95)")
    sim.add_argument("--rho", type=float, default=1.0, help="ratio h/b (default 1)")
    _add_output(sim)
    return parser


# --------------------------------------------------------------------------
# validation


def _check_common(args):
    if getattr(args, "rho", 1.0) is not None and not args.rho > 0:
        raise CliError("--rho", "rho must be positive")
    if hasattr(args, "level") and not 0 < args.level < 1:
        raise CliError("--level", "level must lie in (0, 1)")
    for flag in ("h", "b"):
        v = getattr(args, flag, None)
        if v is not None and not (v > 0 and math.isfinite(v)):
            raise CliError(f"--{flag}", f"{flag} must be positive and finite")
    if hasattr(args, "neval") and args.neval < 1:
        raise CliError("--neval", "neval must be >= 1")


def _check_orders(args):
    if args.p < 0:
        raise CliError("--p", "p must be >= 0")
    if not 0 <= args.deriv <= args.p:
        raise CliError("--deriv", f"deriv must satisfy 0 <= deriv <= p = {args.p}")


def _resolve_bwselect(args, notices, default="imse-dpi"):
    if getattr(args, "h", None) is not None:
        if args.bwselect is not None:
            notices.append(f"--h given; ignoring --bwselect {args.bwselect}")
        return default
    return args.bwselect or default


def _fit_spec(args, notices) -> FitSpec:
    _check_orders(args)
    _check_common(args)
    method = _resolve_bwselect(args, notices)
    if method == "ce-dpi" and args.p % 2 == 0:
        raise CliError("--bwselect", "ce-dpi requires odd p; use ce-rot for even p",
                       "UnsupportedMethodError")
    if args.bwcheck and args.bwcheck < args.p + 2:
        raise CliError("--bwcheck", f"bwcheck must be 0 or >= p+2 = {args.p + 2}")
    if args.nnmatch < 1:
        raise CliError("--nnmatch", "nnmatch must be >= 1")
    if args.vce in ("cluster", "nncluster") and args.cluster_col is None:
        raise CliError("--cluster-col", f"--vce {args.vce} needs --cluster-col")
    return FitSpec(p=args.p, nu=args.deriv, kernel=args.kernel,
                   level=getattr(args, "level", 0.95), rho=args.rho,
                   vce=VceSpec(args.vce, args.nnmatch), interior=args.interior,
                   bwcheck=args.bwcheck, bwselect=method,
                   h=getattr(args, "h", None), b=getattr(args, "b", None))


def _grid(args, x):
    if args.eval is not None:
        return np.sort(np.asarray(_float_list(args.eval, "--eval")))
    lo = args.grid_min if args.grid_min is not None else None
    hi = args.grid_max if args.grid_max is not None else None
    try:
        return default_grid(x, args.neval, lo, hi)
    except InvalidInputError as exc:
        raise CliError("--grid-min", str(exc)) from None


def _meta(args, n) -> dict:
    skip = {"data", "out", "format", "func"}
    meta = {"subcommand": args.command, "n": int(n)}
    meta.update({k: v for k, v in sorted(vars(args).items()) if k not in skip and k != "command"})
    return meta


# --------------------------------------------------------------------------
# subcommands


def _fmt(v) -> str:
    if isinstance(v, float) and not math.isfinite(v):
        return "NA"
    return f"{v:.6g}"


def _bandwidth_table(rows, meta, fmt) -> str:
    """Render (eval, h, b, warnings) rows."""
    if fmt == "json":
        body = [{"eval": r[0], "h": r[1] if math.isfinite(r[1]) else None,
                 "b": r[2] if math.isfinite(r[2]) else None, "warnings": list(r[3])}
                for r in rows]
        return json.dumps({"meta": meta, "rows": body}, indent=2, allow_nan=False)
    if fmt == "csv":
        lines = ["eval,h,b,warnings"]
        lines += [f"{r[0]!r},{r[1]!r},{r[2]!r},{';'.join(r[3])}" for r in rows]
        return "\n".join(lines) + "\n"
    head = f"{'eval':>12} {'h':>12} {'b':>12}"
    lines = [head, "=" * len(head)]
    for e, h, b, w in rows:
        line = f"{_fmt(e):>12} {_fmt(h):>12} {_fmt(b):>12}"
        if w:
            line += "  ! " + ",".join(w)
        lines.append(line)
    lines.append("=" * len(head))
    return "\n".join(lines) + "\n"


def _cmd_lprobust(args, notices):
    spec = _fit_spec(args, notices)
    sample = ingest_csv(args.data, args.x, args.y, args.cluster_col, notices)
    grid = _grid(args, sample.x)
    rows = lprobust(sample, spec, grid=grid)
    meta = _meta(args, sample.n)
    return (lambda fmt: summarize(rows, fmt, meta, spec.level))


def _cmd_lpbwselect(args, notices):
    spec = _fit_spec(args, notices)
    sample = ingest_csv(args.data, args.x, args.y, args.cluster_col, notices)
    grid = _grid(args, sample.x)
    choices = select_bandwidths(sample, grid, spec.bwselect, spec.p, spec.nu, spec.kernel,
                                spec.vce, spec.interior, spec.bwcheck, spec.rho)
    rows = [(c.eval, c.h, c.b, c.warnings) for c in choices]
    meta = _meta(args, sample.n)
    meta["bwselect"] = spec.bwselect
    return (lambda fmt: _bandwidth_table(rows, meta, fmt))


def _kde_spec(args, notices) -> KdeSpec:
    _check_common(args)
    method = _resolve_bwselect(args, notices)
    return KdeSpec(kernel=args.kernel, level=getattr(args, "level", 0.95), rho=args.rho,
                   bwselect=method, h=getattr(args, "h", None), b=getattr(args, "b", None))


def _cmd_kdrobust(args, notices):
    spec = _kde_spec(args, notices)
    x = ingest_csv(args.data, args.x, None, None, notices)
    grid = _grid(args, x)
    rows = kdrobust(x, spec, grid=grid)
    meta = _meta(args, x.size)
    return (lambda fmt: summarize(rows, fmt, meta, spec.level))


def _cmd_kdbwselect(args, notices):
    spec = _kde_spec(args, notices)
    x = ingest_csv(args.data, args.x, None, None, notices)
    grid = _grid(args, x)
    warns: list = []
    if spec.bwselect == "mse-dpi":
        hs = [kd_bandwidth(x, g, "mse-dpi", spec.kernel, warnings=warns) for g in grid]
    else:
        hs = [kd_bandwidth(x, grid, spec.bwselect, spec.kernel, warnings=warns)] * grid.size
    rows = [(float(g), float(h), float(h) / spec.rho, list(warns)) for g, h in zip(grid, hs)]
    meta = _meta(args, x.size)
    meta["bwselect"] = spec.bwselect
    return (lambda fmt: _bandwidth_table(rows, meta, fmt))


def _cmd_simulate(args, notices):
    _check_orders(args)
    _check_common(args)
    if args.n < 2:
        raise CliError("--n", "n must be >= 2")
    if args.reps < 1:
        raise CliError("--reps", "reps must be >= 1")
    if args.bw == "ce-dpi" and args.p % 2 == 0:
        raise CliError("--bw", "ce-dpi requires odd p; use ce-rot for even p",
                       "UnsupportedMethodError")
    evals = _float_list(args.evals, "--evals")
    if any(not 0.0 <= e <= 1.0 for e in evals):
        raise CliError("--evals", "evaluation points must lie in [0, 1]")
    design = SimDesign(n=args.n, reps=args.reps, evals=evals, p=args.p, nu=args.deriv,
                       kernel=args.kernel, vce=VceSpec(args.vce), bw=args.bw,
                       level=args.level, seed=args.seed, rho=args.rho)
    result = run_study(design)
    return result.render


COMMANDS = {
    "lprobust": _cmd_lprobust,
    "lpbwselect": _cmd_lpbwselect,
    "kdrobust": _cmd_kdrobust,
    "kdbwselect": _cmd_kdbwselect,
    "simulate": _cmd_simulate,
}


def _out_format(args) -> str:
    if args.format:
        return args.format
    return "csv" if Path(args.out).suffix.lower() == ".csv" else "json"


def _error_line(command, flag, exc) -> str:
    msg = " ".join(str(exc).split())
    kind = getattr(exc, "kind", type(exc).__name__)
    return f"error subcommand={command or '-'} flag={flag} type={kind}: {msg}"


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.ERROR, format="%(levelname)s: %(message)s")
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    command = next((a for a in argv if a in COMMANDS), None)
    notices: List[str] = []
    try:
        args = parser.parse_args(argv)
        render = COMMANDS[args.command](args, notices)
        for note in notices:
            print(f"notice: {note}", file=sys.stderr)
        if args.out:
            text = render(_out_format(args))
            Path(args.out).write_text(text if text.endswith("\n") else text + "\n")
            sys.stdout.write(render("text"))
        else:
            text = render(args.format or "text")
            sys.stdout.write(text if text.endswith("\n") else text + "\n")
    except CliError as exc:
        for note in notices:
            print(f"notice: {note}", file=sys.stderr)
        print(_error_line(command, exc.flag, exc), file=sys.stderr)
        return 2
    except (SmoothingError, OSError) as exc:
        for note in notices:
            print(f"notice: {note}", file=sys.stderr)
        print(_error_line(command, "-", exc), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
