"""Simulation study: regression function sin(2x-1) + 2exp(-16(x-1/2)^2) on U[0,1].

Every replication draws from its own generator seeded by ``(seed, rep)``
so results do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numpy.polynomial import hermite

from ._optimize import argmin_positive
from .bandwidth import FLAT_TOL, METHODS
from .errors import FlatObjectiveError, InvalidInputError, SmoothingError
from .inference import FitSpec, fit_point, lprobust
from .kernels import KernelType, moment_matrices
from .lpcore import Sample
from .variance import VceSpec, residuals_nn

log = logging.getLogger(__name__)

BW_MODES = ("population",) + METHODS
DEFAULT_EVALS = (0.0, 0.25, 0.5, 0.75, 1.0)
FAILURE_BUDGET = 0.01


def m_true(x, deriv: int = 0):
    """The regression function or its ``deriv``-th derivative, in closed form."""
    x = np.asarray(x, dtype=float)
    k = int(deriv)
    sin_part = 2.0 ** k * np.sin(2.0 * x - 1.0 + k * math.pi / 2.0)
    # d^k/dx^k exp(-a d^2) = (-sqrt(a))^k H_k(sqrt(a) d) exp(-a d^2), a = 16
    d = x - 0.5
    coef = np.zeros(k + 1)
    coef[k] = 1.0
    gauss = 2.0 * (-4.0) ** k * hermite.hermval(4.0 * d, coef) * np.exp(-16.0 * d * d)
    return sin_part + gauss


def dgp_draw(n: int, rng) -> Sample:
    """One sample of size n: X ~ U[0,1], Y = m(X) + N(0,1)."""
    if n < 2:
        raise InvalidInputError("a simulated sample needs n >= 2")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    x = rng.uniform(0.0, 1.0, n)
    eps = rng.standard_normal(n)
    return Sample(x, m_true(x) + eps)


def population_bandwidth(eval: float, p: int = 1, nu: int = 0, kernel="epa", n: int = 500,
                         sigma2: float = 1.0, deriv_fn=m_true, strict: bool = False) -> float:
    """MSE-optimal bandwidth from the true derivatives and U[0,1] design.

    Kernel moments are integrated over the part of the kernel support that
    stays inside [0, 1], so boundary points get boundary constants.
    """
    kernel = KernelType.parse(kernel)
    m1 = float(deriv_fn(eval, p + 1))
    m2 = float(deriv_fn(eval, p + 2))
    odd = (p - nu) % 2 == 1
    fac = math.factorial(nu)

    def consts(h):
        gamma, lam1, lam2, psi = moment_matrices(kernel, p, -eval / h, (1.0 - eval) / h)
        row = np.linalg.inv(gamma)[nu]
        b1 = fac / math.factorial(p + 1) * (row @ lam1) * m1
        b2 = 0.0 if odd else fac / math.factorial(p + 2) * (row @ lam2) * m2
        v = fac ** 2 * (row @ psi @ row) * sigma2
        return b1, b2, v

    def objective(h):
        b1, b2, v = consts(h)
        return h ** (2 * (p + 1 - nu)) * (b1 + h * b2) ** 2 + v / (n * h ** (1 + 2 * nu))

    b1, b2, v = consts(1.0)
    if b1 * b1 + b2 * b2 <= FLAT_TOL * max(v, 1.0):
        if strict:
            raise FlatObjectiveError("true bias constants vanish")
        log.warning("population bias constants vanish at x=%g", eval)
        return 2.0 * 1e-3
    return argmin_positive(objective, 1e-3, 1.0)


@dataclass
class SimDesign:
    n: int = 500
    reps: int = 5000
    evals: Sequence[float] = DEFAULT_EVALS
    p: int = 1
    nu: int = 0
    kernel: KernelType = KernelType.EPANECHNIKOV
    vce: VceSpec = field(default_factory=VceSpec)
    bw: str = "imse-dpi"
    level: float = 0.95
    seed: int = 0
    rho: float = 1.0
    bwcheck: int = 21

    def __post_init__(self):
        self.kernel = KernelType.parse(self.kernel)
        if not isinstance(self.vce, VceSpec):
            self.vce = VceSpec(self.vce)
        self.evals = tuple(float(e) for e in self.evals)
        if self.reps < 1:
            raise InvalidInputError("reps must be >= 1")
        if any(not 0.0 <= e <= 1.0 for e in self.evals):
            raise InvalidInputError("evaluation points must lie in [0, 1]")
        if self.bw not in BW_MODES:
            raise InvalidInputError(f"unknown bandwidth mode {self.bw!r}; expected one of {BW_MODES}")

    def fit_spec(self, h=None) -> FitSpec:
        return FitSpec(p=self.p, nu=self.nu, kernel=self.kernel, level=self.level, rho=self.rho,
                       vce=self.vce, bwcheck=self.bwcheck,
                       bwselect=self.bw if self.bw != "population" else "imse-dpi", h=h)


def _one_rep(design: SimDesign, rep: int, pop_h) -> np.ndarray:
    """Rows of (h, est, est_bc, us_lo, us_hi, rbc_lo, rbc_hi) per evaluation point."""
    rng = np.random.default_rng([design.seed, rep])
    sample = dgp_draw(design.n, rng)
    out = np.full((len(design.evals), 7), np.nan)
    try:
        if pop_h is None:
            rows = lprobust(sample, design.fit_spec(), grid=design.evals)
            # lprobust sorts the grid; map back to the design order
            by_eval = {r.eval: r for r in rows}
            rows = [by_eval[e] for e in design.evals]
        else:
            spec = design.fit_spec()
            nn = residuals_nn(sample, spec.vce.nnmatch) if spec.vce.kind.uses_nn else None
            rows = []
            for e, h in zip(design.evals, pop_h):
                try:
                    rows.append(fit_point(sample, e, h, h / design.rho, spec, nn))
                except SmoothingError:
                    rows.append(None)
    except SmoothingError:
        return out
    for i, r in enumerate(rows):
        if r is None:
            continue
        out[i] = (r.h, r.est, r.est_bc, r.ci_us[0], r.ci_us[1], r.ci_rbc[0], r.ci_rbc[1])
    return out


def _run_chunk(args):
    design, reps, pop_h = args
    return [_one_rep(design, r, pop_h) for r in reps]


def worker_count(requested: Optional[int] = None) -> int:
    if requested is None:
        requested = int(os.environ.get("NPROBUST_THREADS", "0") or 0)
    if requested <= 0:
        requested = os.cpu_count() or 1
    return max(1, requested)


@dataclass
class StudyResult:
    design: SimDesign
    table: List[dict]
    raw: np.ndarray = field(repr=False, default=None)

    def render(self, format: str = "text") -> str:
        return render_table(self.table, format, meta=_design_meta(self.design))


TABLE_FIELDS = ("eval", "truth", "h", "bias", "var", "mse", "bias_bc", "var_bc", "mse_bc",
                "ec_us", "il_us", "ec_rbc", "il_rbc", "failures")


def _aggregate(design: SimDesign, raw: np.ndarray) -> List[dict]:
    reps = raw.shape[0]
    table = []
    for i, e in enumerate(design.evals):
        block = raw[:, i, :]
        ok = np.all(np.isfinite(block), axis=1)
        fails = int(reps - ok.sum())
        if fails > FAILURE_BUDGET * reps:
            raise SmoothingError(
                f"{fails} of {reps} replications failed at x={e:g}, above the "
                f"{FAILURE_BUDGET:.0%} failure budget"
            )
        b = block[ok]
        truth = float(m_true(e, design.nu))
        row = {"eval": e, "truth": truth, "h": float(np.mean(b[:, 0]))}
        for tag, col in (("", 1), ("_bc", 2)):
            est = b[:, col]
            bias = float(np.mean(est) - truth)
            var = float(np.mean((est - np.mean(est)) ** 2))
            row["bias" + tag] = bias
            row["var" + tag] = var
            row["mse" + tag] = float(np.mean((est - truth) ** 2))
        for tag, lo, hi in (("us", 3, 4), ("rbc", 5, 6)):
            row["ec_" + tag] = float(np.mean((b[:, lo] <= truth) & (truth <= b[:, hi])))
            row["il_" + tag] = float(np.mean(b[:, hi] - b[:, lo]))
        row["failures"] = fails
        table.append({k: row[k] for k in TABLE_FIELDS})
    return table


def run_study(design: SimDesign, workers: Optional[int] = None) -> StudyResult:
    """Replicate the simulation and aggregate bias, variance, MSE, coverage and length."""
    pop_h = None
    if design.bw == "population":
        pop_h = [population_bandwidth(e, design.p, design.nu, design.kernel, design.n)
                 for e in design.evals]
    workers = worker_count(workers)
    reps = list(range(design.reps))
    if workers == 1 or design.reps < 2:
        results = _run_chunk((design, reps, pop_h))
    else:
        chunks = [reps[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [(design, c, pop_h) for c in chunks]))
        results = [None] * design.reps
        for c, part in zip(chunks, parts):
            for r, res in zip(c, part):
                results[r] = res
    raw = np.stack(results)
    return StudyResult(design, _aggregate(design, raw), raw)


def _design_meta(d: SimDesign) -> dict:
    return {"n": d.n, "reps": d.reps, "p": d.p, "deriv": d.nu, "kernel": d.kernel.value,
            "vce": d.vce.kind.value, "bw": d.bw, "level": d.level, "seed": d.seed, "rho": d.rho}


def render_table(table: List[dict], format: str = "text", meta: Optional[dict] = None) -> str:
    fmt = format.lower()
    if fmt == "json":
        return json.dumps({"meta": meta or {}, "rows": table}, indent=2)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_FIELDS)
        for row in table:
            w.writerow([repr(row[k]) for k in TABLE_FIELDS])
        return buf.getvalue()
    if fmt != "text":
        raise InvalidInputError(f"unknown output format {format!r}")
    cols = ("eval", "h", "bias", "var", "mse", "ec_us", "il_us", "ec_rbc", "il_rbc")
    head = " ".join(f"{c:>11}" for c in cols) + f" {'failures':>8}"
    lines = [head, "-" * len(head)]
    for r in table:
        lines.append(" ".join(f"{r[c]:>11.6g}" for c in cols) + f" {r['failures']:>8d}")
    return "\n".join(lines) + "\n"


def density_coverage(n: int = 5000, reps: int = 1000, seed: int = 0, eval: float = 0.0,
                     kernel="epa", level: float = 0.95, bwselect: str = "mse-dpi") -> dict:
    """Coverage of density intervals at ``eval`` for standard normal data."""
    from .inference import KdeSpec, kdrobust
    from scipy.stats import norm

    truth = float(norm.pdf(eval))
    cover_us = cover_rbc = 0
    ests, hs = [], []
    for r in range(reps):
        rng = np.random.default_rng([seed, r])
        x = rng.standard_normal(n)
        row = kdrobust(x, KdeSpec(kernel=kernel, level=level, bwselect=bwselect), grid=[eval])[0]
        cover_us += row.ci_us[0] <= truth <= row.ci_us[1]
        cover_rbc += row.ci_rbc[0] <= truth <= row.ci_rbc[1]
        ests.append(row.est)
        hs.append(row.h)
    return {"truth": truth, "ec_us": float(cover_us / reps), "ec_rbc": float(cover_rbc / reps),
            "mean_est": float(np.mean(ests)), "mean_h": float(np.mean(hs))}
