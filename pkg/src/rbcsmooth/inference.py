"""Grid-level estimation with conventional and robust bias-corrected intervals."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import norm

from .bandwidth import METHODS, select_bandwidths
from .errors import InvalidInputError, SmoothingError
from .kde import KD_METHODS, kd_bandwidth, kde_rbc
from .kernels import KernelType
from .lpcore import Sample, bc_weights, build_design, effective_n, estimator_weights
from .variance import VceSpec, conventional_sigma, rbc_sigma, residuals_nn

log = logging.getLogger(__name__)

FIELDS = ("eval", "h", "b", "n_eff", "est", "se_us", "est_bc", "se_rbc",
          "ci_us_lo", "ci_us_hi", "ci_rbc_lo", "ci_rbc_hi", "warnings")

_NUM = {"type": ["number", "null"]}
POINTFIT_JSON_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["meta", "rows"],
    "properties": {
        "meta": {"type": "object"},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(FIELDS),
                "additionalProperties": False,
                "properties": {
                    **{k: _NUM for k in FIELDS if k not in ("n_eff", "warnings")},
                    "n_eff": {"type": "integer", "minimum": 0},
                    "warnings": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
    },
}


@dataclass
class FitSpec:
    """Options for local polynomial estimation and inference."""

    p: int = 1
    nu: int = 0
    kernel: KernelType = KernelType.EPANECHNIKOV
    level: float = 0.95
    rho: float = 1.0
    vce: VceSpec = field(default_factory=VceSpec)
    interior: bool = False
    bwcheck: int = 21
    bwselect: str = "imse-dpi"
    h: Optional[float] = None
    b: Optional[float] = None

    def __post_init__(self):
        self.kernel = KernelType.parse(self.kernel)
        if not isinstance(self.vce, VceSpec):
            self.vce = VceSpec(self.vce)
        if self.p < 0 or not 0 <= self.nu <= self.p:
            raise InvalidInputError(f"need 0 <= deriv <= p, got p={self.p}, deriv={self.nu}")
        if not 0 < self.level < 1:
            raise InvalidInputError("level must lie in (0, 1)")
        if not self.rho > 0:
            raise InvalidInputError("rho must be positive")
        if self.bwselect.lower() not in METHODS:
            raise InvalidInputError(f"unknown bwselect {self.bwselect!r}")
        self.bwselect = self.bwselect.lower()
        if self.bwcheck and self.bwcheck < self.p + 2:
            raise InvalidInputError(f"bwcheck must be 0 or >= p+2 = {self.p + 2}")
        for name in ("h", "b"):
            val = getattr(self, name)
            if val is not None and not (val > 0 and math.isfinite(val)):
                raise InvalidInputError(f"{name} must be positive and finite")


@dataclass
class KdeSpec:
    kernel: KernelType = KernelType.EPANECHNIKOV
    level: float = 0.95
    rho: float = 1.0
    bwselect: str = "imse-dpi"
    h: Optional[float] = None
    b: Optional[float] = None

    def __post_init__(self):
        self.kernel = KernelType.parse(self.kernel)
        if not 0 < self.level < 1:
            raise InvalidInputError("level must lie in (0, 1)")
        if not self.rho > 0:
            raise InvalidInputError("rho must be positive")
        if self.bwselect.lower() not in KD_METHODS:
            raise InvalidInputError(f"unknown density bwselect {self.bwselect!r}")
        self.bwselect = self.bwselect.lower()


@dataclass
class PointFit:
    eval: float
    h: float
    b: float
    n_eff: int
    est: float
    se_us: float
    est_bc: float
    se_rbc: float
    ci_us: tuple
    ci_rbc: tuple
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci_us_lo"], d["ci_us_hi"] = self.ci_us
        d["ci_rbc_lo"], d["ci_rbc_hi"] = self.ci_rbc
        del d["ci_us"], d["ci_rbc"]
        d["warnings"] = list(self.warnings)
        return {k: d[k] for k in FIELDS}

    @classmethod
    def from_dict(cls, d) -> "PointFit":
        return cls(
            eval=d["eval"], h=d["h"], b=d["b"], n_eff=int(d["n_eff"]), est=d["est"],
            se_us=d["se_us"], est_bc=d["est_bc"], se_rbc=d["se_rbc"],
            ci_us=(d["ci_us_lo"], d["ci_us_hi"]), ci_rbc=(d["ci_rbc_lo"], d["ci_rbc_hi"]),
            warnings=list(d["warnings"]),
        )


def confidence_interval(center: float, se: float, level: float = 0.95):
    """Symmetric normal interval ``center -/+ z_(1-alpha/2) * se``."""
    if not 0 < level < 1:
        raise InvalidInputError("level must lie in (0, 1)")
    if se < 0:
        raise InvalidInputError("standard error must be nonnegative")
    z = norm.ppf(0.5 + level / 2.0)
    return (center - z * se, center + z * se)


def default_grid(x, neval: int = 30, lo: Optional[float] = None, hi: Optional[float] = None):
    x = np.asarray(x, dtype=float)
    lo = float(x.min()) if lo is None else float(lo)
    hi = float(x.max()) if hi is None else float(hi)
    if neval < 1 or hi < lo:
        raise InvalidInputError("empty evaluation grid")
    return np.linspace(lo, hi, neval)


def _failed_row(x0, h, b, n_eff, flag):
    nan = float("nan")
    return PointFit(float(x0), h, b, n_eff, nan, nan, nan, nan, (nan, nan), (nan, nan), [flag])


def fit_point(sample: Sample, x0: float, h: float, b: float, spec: FitSpec,
              nn_res=None) -> PointFit:
    """Estimates, standard errors and intervals at one point for given h and b."""
    p, nu = spec.p, spec.nu
    cache_p = build_design(sample, x0, h, p, spec.kernel)
    cache_q = build_design(sample, x0, b, p + 1, spec.kernel)
    w = estimator_weights(cache_p, nu)
    est = float(w @ sample.y[cache_p.idx])
    var_us = max(conventional_sigma(spec.vce, sample, cache_p, nn_res).quad(w), 0.0)
    idx, wbc = bc_weights(cache_p, cache_q, nu)
    est_bc = float(wbc @ sample.y[idx])
    var_rbc = max(rbc_sigma(spec.vce, sample, cache_p, cache_q, nn_res).quad(wbc), 0.0)
    se_us, se_rbc = math.sqrt(var_us), math.sqrt(var_rbc)
    return PointFit(
        eval=float(x0), h=float(h), b=float(b), n_eff=cache_p.n_eff, est=est, se_us=se_us,
        est_bc=est_bc, se_rbc=se_rbc,
        ci_us=confidence_interval(est, se_us, spec.level),
        ci_rbc=confidence_interval(est_bc, se_rbc, spec.level),
    )


def _flag(exc):
    name = type(exc).__name__
    return {
        "SingularDesignError": "singular-design",
        "DegenerateLeverageError": "degenerate-leverage",
        "FlatObjectiveError": "flat-objective",
    }.get(name, "failed")


def lprobust(sample: Sample, spec: Optional[FitSpec] = None,
             grid: Optional[Sequence[float]] = None, neval: int = 30) -> List[PointFit]:
    """Local polynomial point estimates with conventional and RBC intervals.

    Bandwidths come from ``spec.bwselect`` unless ``spec.h`` is given; b
    defaults to h / rho, and an explicit ``spec.b`` wins. Rows are sorted
    by evaluation point; a failure at one point yields a flagged row.
    """
    spec = spec or FitSpec()
    spec.vce.check(sample)
    grid = default_grid(sample.x, neval) if grid is None else np.atleast_1d(
        np.asarray(grid, dtype=float))
    if grid.size == 0 or not np.all(np.isfinite(grid)):
        raise InvalidInputError("evaluation grid must be nonempty and finite")
    grid = np.sort(grid)
    if spec.h is not None:
        hs = np.full(grid.size, float(spec.h))
        bs = np.full(grid.size, float(spec.b) if spec.b is not None else spec.h / spec.rho)
        bw_warn = [[] for _ in grid]
    else:
        choices = select_bandwidths(sample, grid, spec.bwselect, spec.p, spec.nu, spec.kernel,
                                    spec.vce, spec.interior, spec.bwcheck, spec.rho)
        hs = np.array([c.h for c in choices])
        bs = np.array([c.h / spec.rho if spec.b is None else spec.b for c in choices])
        bw_warn = [c.warnings for c in choices]
    nn_res = residuals_nn(sample, spec.vce.nnmatch) if spec.vce.kind.uses_nn else None
    rows = []
    for x0, h, b, warns in zip(grid, hs, bs, bw_warn):
        n_eff = effective_n(sample, x0, h) if np.isfinite(h) else 0
        if not (np.isfinite(h) and np.isfinite(b)):
            rows.append(_failed_row(x0, float(h), float(b), n_eff, "no-bandwidth"))
            rows[-1].warnings[:0] = warns
            continue
        try:
            row = fit_point(sample, x0, float(h), float(b), spec, nn_res)
        except SmoothingError as exc:
            log.warning("x=%g: %s", x0, exc)
            row = _failed_row(x0, float(h), float(b), n_eff, _flag(exc))
        row.warnings[:0] = warns
        rows.append(row)
    if all(np.isnan(r.est) for r in rows):
        raise SmoothingError("estimation failed at every evaluation point: "
                             + ", ".join(sorted({w for r in rows for w in r.warnings})))
    return rows


def kdrobust(x_data, spec: Optional[KdeSpec] = None, grid: Optional[Sequence[float]] = None,
             neval: int = 30) -> List[PointFit]:
    """Density estimates with conventional and RBC intervals (interior points)."""
    spec = spec or KdeSpec()
    x = np.asarray(x_data, dtype=float).ravel()
    if x.size == 0:
        raise InvalidInputError("density estimation needs data")
    grid = default_grid(x, neval) if grid is None else np.atleast_1d(np.asarray(grid, dtype=float))
    grid = np.sort(grid)
    bw_warn: list = []
    if spec.h is not None:
        hs = np.full(grid.size, float(spec.h))
    else:
        try:
            if spec.bwselect == "mse-dpi":
                hs = np.array([kd_bandwidth(x, g, "mse-dpi", spec.kernel, warnings=bw_warn)
                               for g in grid])
            else:
                hs = np.full(grid.size, kd_bandwidth(x, grid, spec.bwselect, spec.kernel,
                                                     warnings=bw_warn))
        except SmoothingError as exc:
            log.warning("density bandwidth selection failed: %s", exc)
            hs = np.full(grid.size, np.nan)
            bw_warn.append("bandwidth-failed")
    rows = []
    for x0, h in zip(grid, hs):
        b = spec.b if spec.b is not None else h / spec.rho
        if not (np.isfinite(h) and h > 0):
            row = _failed_row(x0, float(h), float(b), 0, "no-bandwidth")
            row.warnings[:0] = bw_warn
            rows.append(row)
            continue
        r = kde_rbc(x, x0, h, b, spec.kernel)
        se_us = r["se_us"] if np.isfinite(r["se_us"]) else float("nan")
        ci_us = confidence_interval(r["est"], se_us, spec.level) if np.isfinite(se_us) else (
            float("nan"), float("nan"))
        ci_rbc = confidence_interval(r["est_bc"], r["se_rbc"], spec.level) if np.isfinite(
            r["se_rbc"]) else (float("nan"), float("nan"))
        rows.append(PointFit(float(x0), float(h), float(b), effective_n(x, x0, h), r["est"],
                             se_us, r["est_bc"], r["se_rbc"], ci_us, ci_rbc,
                             list(bw_warn) + r["warnings"]))
    return rows


# --------------------------------------------------------------------------
# rendering


def _fmt(v, width=10):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "NA".rjust(width)
    return f"{v:.6g}".rjust(width)


def _json_num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def summarize(results: Sequence[PointFit], format: str = "text", meta: Optional[dict] = None,
              level: float = 0.95) -> str:
    """Render results as a text table, JSON document or CSV."""
    fmt = format.lower()
    if fmt == "json":
        rows = [{k: _json_num(v) for k, v in r.to_dict().items()} for r in results]
        return json.dumps({"meta": meta or {}, "rows": rows}, indent=2, allow_nan=False)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(FIELDS)
        for r in results:
            d = r.to_dict()
            writer.writerow([repr(float(d[k])) if k not in ("n_eff", "warnings") else
                             (d[k] if k == "n_eff" else ";".join(d[k])) for k in FIELDS])
        return buf.getvalue()
    if fmt != "text":
        raise InvalidInputError(f"unknown output format {format!r}")
    pct = f"{100 * level:g}%"
    header = (f"{'eval':>10} {'h':>10} {'Eff.n':>6} {'Est.':>10} {'Std. Error':>10}"
              f"   Robust B.C. [{pct} C.I.]")
    lines = [header, "=" * len(header)]
    for r in results:
        ci = f"[{_fmt(r.ci_rbc[0], 0).strip()} , {_fmt(r.ci_rbc[1], 0).strip()}]"
        line = (f"{_fmt(r.eval)} {_fmt(r.h)} {r.n_eff:>6d} {_fmt(r.est)} {_fmt(r.se_us)}"
                f"   {ci}")
        if r.warnings:
            line += "  ! " + ",".join(r.warnings)
        lines.append(line)
    lines.append("=" * len(header))
    return "\n".join(lines) + "\n"


def read_csv_results(text: str) -> List[PointFit]:
    """Parse the CSV produced by :func:`summarize`."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        d = {k: float(rec[k]) for k in FIELDS if k not in ("n_eff", "warnings")}
        d["n_eff"] = int(rec["n_eff"])
        d["warnings"] = [w for w in rec["warnings"].split(";") if w]
        out.append(PointFit.from_dict(d))
    return out
