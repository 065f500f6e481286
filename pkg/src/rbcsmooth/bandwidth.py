"""Bandwidth selectors for local polynomial regression.

MSE/IMSE targets (direct plug-in and rule-of-thumb), coverage-error
targets, and the minimum-observations floor. Pointwise bias and variance
constants are pre-asymptotic: they are built from the local design at a
preliminary bandwidth and then treated as fixed while optimizing over h.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ._optimize import argmin_positive
from .errors import (
    FlatObjectiveError,
    InvalidInputError,
    SingularDesignError,
    SmoothingError,
    UnsupportedMethodError,
)
from .kernels import KernelType, kernel_weights, moment_matrices, normal_reference_constant
from .lpcore import (
    Sample,
    bc_weights,
    bias_components,
    build_design,
    local_coefficients,
)
from .variance import VceSpec, conventional_sigma, conventional_variance, rbc_sigma, residuals_nn

log = logging.getLogger(__name__)

METHODS = ("mse-dpi", "imse-dpi", "mse-rot", "imse-rot", "ce-dpi", "ce-rot")
FLAT_TOL = 1e-12


@dataclass
class BandwidthChoice:
    method: str
    eval: float
    h: float
    b: float
    warnings: List[str] = field(default_factory=list)


# --------------------------------------------------------------------------
# objectives and their minimizers (pure functions of the constants)


def mse_objective(h, b1, b2, v, n, p, nu):
    """Squared full bias plus variance; arrays of constants are averaged."""
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    v = np.asarray(v, dtype=float)
    bias2 = np.mean((b1 + h * b2) ** 2)
    return h ** (2 * (p + 1 - nu)) * bias2 + np.mean(v) / (n * h ** (1 + 2 * nu))


def h_mse_closed_form(b1sq, v, n, p, nu):
    """Minimizer of ``h^(2(p+1-nu)) b1sq + v / (n h^(1+2nu))``."""
    den = 2.0 * (p + 1 - nu) * b1sq
    if den <= 0:
        raise FlatObjectiveError("leading bias constant is zero; supply h manually")
    return ((1.0 + 2.0 * nu) * v / den) ** (1.0 / (2 * p + 3)) * n ** (-1.0 / (2 * p + 3))


def mse_argmin(b1, b2, v, n, p, nu, lo, hi):
    return argmin_positive(lambda h: mse_objective(h, b1, b2, v, n, p, nu), lo, hi)


def ce_objective(h, e1, e2, e3, e4, e5, n, p):
    """Coverage-error objective ``|e1/(nh) + n h^(2p+5)(e2+h e3)^2 + h^(p+2)(e4+h e5)|``."""
    return abs(e1 / (n * h) + n * h ** (2 * p + 5) * (e2 + h * e3) ** 2
               + h ** (p + 2) * (e4 + h * e5))


def h_ce_closed_form(e1, e2, n, p):
    """Minimizer of ``e1/(nh) + n h^(2p+5) e2^2``."""
    return (e1 / ((2 * p + 5) * n * n * e2 * e2)) ** (1.0 / (2 * p + 6))


def ce_argmin(e1, e2, e3, n, p, lo, hi, e4=0.0, e5=0.0):
    return argmin_positive(lambda h: ce_objective(h, e1, e2, e3, e4, e5, n, p), lo, hi)


def h_ce_rot(h_mse: float, n: int, p: int) -> float:
    """Rescale an MSE-optimal bandwidth to the coverage-error-optimal rate."""
    if h_mse <= 0:
        raise InvalidInputError("h_mse must be positive")
    if p % 2 == 1:
        expo = -p / ((2 * p + 3) * (p + 3))
    else:
        expo = -(p + 2) / ((2 * p + 5) * (p + 3))
    return float(n) ** expo * h_mse


# --------------------------------------------------------------------------
# bandwidth floor


def bwcheck_floor(sample, eval: float, nmin: int) -> float:
    """Smallest h with at least ``nmin`` observations in ``[eval-h, eval+h]``."""
    x = sample.x if isinstance(sample, Sample) else np.asarray(sample, dtype=float)
    if nmin > x.size:
        raise InvalidInputError(f"bwcheck={nmin} exceeds the sample size {x.size}")
    if nmin <= 0:
        return 0.0
    d = np.abs(x - eval)
    return float(np.partition(d, nmin - 1)[nmin - 1])


def apply_bwcheck(h: float, sample, eval: float, nmin: int) -> float:
    """Enlarge ``h`` so that at least ``nmin`` observations fall in the window."""
    return max(float(h), bwcheck_floor(sample, eval, nmin))


# --------------------------------------------------------------------------
# preliminary quantities shared across evaluation points


def _global_fit(sample: Sample, order: int):
    x, y = sample.x, sample.y
    if x.size <= order + 1:
        raise InvalidInputError(
            f"global polynomial of order {order} needs more than {order + 1} observations"
        )
    try:
        poly = np.polynomial.Polynomial.fit(x, y, order)
    except np.linalg.LinAlgError as exc:
        raise InvalidInputError(f"global polynomial fit failed: {exc}") from None
    resid = y - poly(x)
    sigma2 = float(resid @ resid / (x.size - order - 1))
    return poly, sigma2


def _fit_constants(kernel, o, d, lo=-1.0, hi=1.0):
    gamma, lam1, _, psi = moment_matrices(KernelType.parse(kernel), o, lo, hi)
    ginv = np.linalg.inv(gamma)
    cv = math.factorial(d) ** 2 * (ginv @ psi @ ginv)[d, d]
    cb = math.factorial(d) / math.factorial(o + 1) * (ginv @ lam1)[d]
    return cv, cb


def _interior_constants(kernel, o, d):
    return _fit_constants(kernel, o, d)


def _fg_strength(sample, poly, o):
    deriv = poly.deriv(o + 1)(sample.x)
    return float(deriv @ deriv)


def _fg_rot(sample, poly, sigma2, o, d, kernel):
    """Integrated rule-of-thumb bandwidth for the d-th derivative with a local order-o fit."""
    cv, cb = _interior_constants(kernel, o, d)
    ssq = _fg_strength(sample, poly, o)
    span = float(sample.x.max() - sample.x.min())
    den = 2.0 * (o + 1 - d) * cb * cb * ssq
    if den <= 0 or sigma2 <= 0:
        return span
    h = ((2 * d + 1) * cv * sigma2 * span / den) ** (1.0 / (2 * o + 3))
    return min(h, span)


def _boundary_rot(sample, poly, sigma2, o, d, kernel, eval, h_int):
    """Pointwise version of :func:`_fg_rot` with kernel constants over the truncated support.

    The bias strength stays the integrated one; only the kernel constants
    see where ``eval`` sits. Windows that fit inside the data keep ``h_int``.
    """
    xmin, xmax = float(sample.x.min()), float(sample.x.max())
    if xmin <= eval - h_int and eval + h_int <= xmax:
        return h_int
    # outside the data the nearest edge supplies the kernel constants
    eval = min(max(eval, xmin), xmax)
    ssq = _fg_strength(sample, poly, o)
    span = xmax - xmin
    if ssq <= 0 or sigma2 <= 0:
        return span

    def objective(h):
        cv, cb = _fit_constants(kernel, o, d, (xmin - eval) / h, (xmax - eval) / h)
        return h ** (2 * (o + 1 - d)) * cb * cb * ssq + cv * sigma2 * span / h ** (2 * d + 1)

    return argmin_positive(objective, h_int * 0.5, span, npts=31, rtol=1e-6)


@dataclass
class Pilot:
    """Sample-level preliminary objects, computed once and shared read-only."""

    sample: Sample
    p: int
    kernel: KernelType
    c_bw: float  # preliminary bandwidth for the pre-asymptotic G, L and V objects
    h_d1: float  # bandwidth for the order-(p+2) fit giving m^(p+1)
    h_d2: float  # bandwidth for the order-(p+3) fit giving m^(p+2)
    poly: np.polynomial.Polynomial
    nn_res: Optional[np.ndarray] = None
    sigma2: float = 1.0
    _local: dict = field(default_factory=dict, repr=False)

    def pilot_bandwidth(self, key: str, eval: float) -> float:
        """Bandwidth of the ``d_p1``/``d_p2`` fit at ``eval``, widened near the data edges."""
        hit = self._local.get((key, eval))
        if hit is None:
            o, d, h_int = ((self.p + 2, self.p + 1, self.h_d1) if key == "d_p1"
                           else (self.p + 3, self.p + 2, self.h_d2))
            if key == "d_p2" and self.h_d2 == self.h_d1 and self.poly.degree() < self.p + 4:
                o, d = self.p + 2, self.p + 1
            hit = _boundary_rot(self.sample, self.poly, self.sigma2, o, d, self.kernel, eval, h_int)
            self._local[(key, eval)] = hit
        return hit

    @classmethod
    def build(cls, sample: Sample, p: int, kernel, vce: Optional[VceSpec] = None) -> "Pilot":
        kernel = KernelType.parse(kernel)
        x = sample.x
        q75, q25 = np.percentile(x, [75, 25])
        scale = min(np.std(x, ddof=1), (q75 - q25) / 1.349)
        if scale <= 0:
            scale = np.std(x, ddof=1)
        c_bw = normal_reference_constant(kernel) * scale * x.size ** -0.2
        order = p + 4 if x.size > p + 6 else p + 3
        poly, sigma2 = _global_fit(sample, order)
        h_d1 = _fg_rot(sample, poly, sigma2, p + 2, p + 1, kernel)
        h_d2 = _fg_rot(sample, poly, sigma2, p + 3, p + 2, kernel) if order == p + 4 else h_d1
        nn_res = None
        if vce is not None and vce.kind.uses_nn:
            nn_res = residuals_nn(sample, vce.nnmatch)
        return cls(sample, p, kernel, c_bw, h_d1, h_d2, poly, nn_res, sigma2)


def _local_derivative(sample, eval, h, order, d, kernel, floor_n):
    h = apply_bwcheck(h, sample, eval, min(floor_n, sample.n))
    cache = build_design(sample, eval, h, order, kernel)
    beta = local_coefficients(cache, sample.y[cache.idx])
    return math.factorial(d) * beta[d] / h ** d


def pilot_derivatives(sample: Sample, eval: float, p: int, kernel="epa",
                      pilot: Optional[Pilot] = None, bwcheck: int = 21) -> dict:
    """Estimate ``m^(p+1)(eval)`` and ``m^(p+2)(eval)`` from local fits of order p+2, p+3."""
    if sample.n < p + 5:
        raise InvalidInputError(f"pilot derivatives need n >= {p + 5}")
    pilot = pilot or Pilot.build(sample, p, kernel)
    out = {}
    for key, order, d in (("d_p1", p + 2, p + 1), ("d_p2", p + 3, p + 2)):
        h = pilot.pilot_bandwidth(key, float(eval))
        try:
            out[key] = float(_local_derivative(sample, eval, h, order, d, kernel,
                                               max(bwcheck, order + 3)))
        except SingularDesignError:
            log.warning("pilot fit of order %d singular at x=%g; using global polynomial",
                        order, eval)
            out[key] = float(pilot.poly.deriv(d)(eval))
    return out


def _dpi_constants(sample, eval, p, nu, kernel, vce, pilot, bwcheck):
    """Pre-asymptotic (b1, b2, v) at ``eval`` built at the preliminary bandwidth."""
    floor = bwcheck_floor(sample, eval, min(max(bwcheck, p + 3), sample.n))
    bw_max = max(abs(eval - sample.x.min()), abs(eval - sample.x.max()))
    c = min(max(pilot.c_bw, floor), max(bw_max, floor))
    derivs = pilot_derivatives(sample, eval, p, kernel, pilot, bwcheck)
    cache = build_design(sample, eval, c, p, kernel)
    bias = bias_components(cache, derivs["d_p1"], derivs["d_p2"], nu)
    sig = conventional_sigma(vce, sample, cache, pilot.nn_res)
    var = conventional_variance(cache, sig, nu)
    v = sample.n * c ** (1 + 2 * nu) * var
    return {"b1": bias["b1"], "b2": bias["b2"], "v": v, "c": c, "derivs": derivs,
            "cache": cache}


def _search_bounds(sample, floor):
    span = float(sample.x.max() - sample.x.min())
    lo = floor if floor > 0 else span * 1e-4
    return lo, max(span, lo * 1.001)


def _solve_mse(b1, b2, v, n, p, nu, interior, c, lo, hi, warnings):
    """Shared MSE/IMSE optimizer over arrays of pointwise constants."""
    b1 = np.atleast_1d(np.asarray(b1, dtype=float))
    b2 = np.atleast_1d(np.asarray(b2, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    vbar = float(np.mean(v))
    odd = (p - nu) % 2 == 1
    if interior and not odd:
        b11 = b1 / np.atleast_1d(c)
        lead = float(np.mean((b11 + b2) ** 2))
        den = 2.0 * (p + 2 - nu) * lead
        if den <= FLAT_TOL * max(vbar, 1.0):
            raise FlatObjectiveError("bias constants vanish")
        return ((1 + 2 * nu) * vbar / (den * n)) ** (1.0 / (2 * p + 5))
    if odd:
        b1sq = float(np.mean(b1 * b1))
        if 2.0 * (p + 1 - nu) * b1sq <= FLAT_TOL * max(vbar, 1.0):
            raise FlatObjectiveError("leading bias constant vanishes")
        return h_mse_closed_form(b1sq, vbar, n, p, nu)
    if float(np.mean(b1 * b1) + np.mean(b2 * b2)) <= FLAT_TOL * max(vbar, 1.0):
        raise FlatObjectiveError("bias constants vanish")
    return mse_argmin(b1, b2, v, n, p, nu, lo, hi)


def _guarded(fn, floor, strict, warnings):
    try:
        return fn()
    except FlatObjectiveError as exc:
        if strict:
            raise FlatObjectiveError(
                f"{exc}: the bandwidth objective is flat; supply h manually"
            ) from None
        warnings.append("degenerate-bias")
        log.warning("degenerate bias constants; using twice the bandwidth floor")
        return 2.0 * floor


def _cap(h, sample):
    return min(h, float(sample.x.max() - sample.x.min()))


def h_mse_dpi(sample: Sample, eval: float, p: int = 1, nu: int = 0, kernel="epa",
              vce: Optional[VceSpec] = None, interior: bool = False, bwcheck: int = 21,
              pilot: Optional[Pilot] = None, strict: bool = False,
              warnings: Optional[list] = None) -> float:
    """Direct plug-in MSE-optimal bandwidth at a single evaluation point."""
    _check_orders(p, nu)
    vce = vce or VceSpec()
    warnings = [] if warnings is None else warnings
    pilot = pilot or Pilot.build(sample, p, kernel, vce)
    k = _dpi_constants(sample, eval, p, nu, kernel, vce, pilot, bwcheck)
    floor = bwcheck_floor(sample, eval, min(max(bwcheck, 0), sample.n)) if bwcheck else 0.0
    lo, hi = _search_bounds(sample, floor)
    h = _guarded(lambda: _solve_mse(k["b1"], k["b2"], k["v"], sample.n, p, nu, interior,
                                    k["c"], lo, hi, warnings),
                 max(floor, lo), strict, warnings)
    h = _cap(h, sample)
    return apply_bwcheck(h, sample, eval, bwcheck) if bwcheck else h


def h_imse_dpi(sample: Sample, grid: Sequence[float], p: int = 1, nu: int = 0, kernel="epa",
               vce: Optional[VceSpec] = None, interior: bool = False, bwcheck: int = 21,
               pilot: Optional[Pilot] = None, strict: bool = False,
               warnings: Optional[list] = None) -> float:
    """Direct plug-in IMSE-optimal bandwidth shared by every grid point.

    Integrals are sample averages of the pointwise constants over the grid.
    Grid points whose preliminary fits fail are skipped.
    """
    _check_orders(p, nu)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise InvalidInputError("evaluation grid is empty")
    vce = vce or VceSpec()
    warnings = [] if warnings is None else warnings
    pilot = pilot or Pilot.build(sample, p, kernel, vce)
    consts, floors = [], []
    for x0 in grid:
        try:
            consts.append(_dpi_constants(sample, x0, p, nu, kernel, vce, pilot, bwcheck))
        except SmoothingError as exc:
            warnings.append(f"imse-skip@{x0:.6g}")
            log.warning("skipping x=%g in the integrated criterion: %s", x0, exc)
            continue
        floors.append(bwcheck_floor(sample, x0, min(bwcheck, sample.n)) if bwcheck else 0.0)
    if not consts:
        raise SingularDesignError("no grid point admits the preliminary fits")
    b1 = [k["b1"] for k in consts]
    b2 = [k["b2"] for k in consts]
    v = [k["v"] for k in consts]
    c = [k["c"] for k in consts]
    all_floor = max(bwcheck_floor(sample, x0, min(bwcheck, sample.n)) for x0 in grid) if bwcheck else 0.0
    lo, hi = _search_bounds(sample, max(floors))
    h = _guarded(lambda: _solve_mse(b1, b2, v, sample.n, p, nu, interior, c, lo, hi, warnings),
                 max(all_floor, lo), strict, warnings)
    h = _cap(h, sample)
    return max(h, all_floor)


def _density_at(sample, eval, kernel):
    """Boundary-renormalized kernel density estimate at a normal-reference bandwidth."""
    x = sample.x
    q75, q25 = np.percentile(x, [75, 25])
    scale = min(np.std(x, ddof=1), (q75 - q25) / 1.349) or np.std(x, ddof=1)
    h = normal_reference_constant(kernel) * scale * x.size ** -0.2
    lo_u = (x.min() - eval) / h
    hi_u = (x.max() - eval) / h
    gamma = moment_matrices(KernelType.parse(kernel), 0, lo_u, hi_u)[0]
    mass = float(gamma[0, 0])
    f = float(np.sum(kernel_weights((x - eval) / h, kernel))) / (x.size * h)
    return f / mass if mass > 0 else f


def _rot_pointwise(sample, eval, p, nu, kernel, poly, sigma2):
    """Boundary-aware asymptotic constants as functions of h for the ROT selector."""
    kernel = KernelType.parse(kernel)
    f = _density_at(sample, eval, kernel)
    if f <= 0:
        raise InvalidInputError(f"no data near x={eval:g} for the rule-of-thumb density")
    m1 = float(poly.deriv(p + 1)(eval))
    m2 = float(poly.deriv(p + 2)(eval))
    xmin, xmax = sample.x.min(), sample.x.max()
    fac = math.factorial(nu)

    def consts(h):
        gamma, lam1, lam2, psi = moment_matrices(kernel, p, (xmin - eval) / h, (xmax - eval) / h)
        ginv = np.linalg.inv(gamma)
        row = ginv[nu]
        b1 = fac / math.factorial(p + 1) * (row @ lam1) * m1
        b2 = fac / math.factorial(p + 2) * (row @ lam2) * m2
        v = fac ** 2 * (row @ psi @ row) * sigma2 / f
        return b1, b2, v

    return consts


def h_rot(sample: Sample, eval, p: int = 1, nu: int = 0, kernel="epa",
          target: str = "mse", bwcheck: int = 21, strict: bool = False,
          warnings: Optional[list] = None) -> float:
    """Rule-of-thumb MSE (scalar ``eval``) or IMSE (grid ``eval``) bandwidth.

    Bias constants use a global polynomial fit of order p+3, the variance
    constant its residual variance and a kernel density estimate of the
    design at each evaluation point.
    """
    _check_orders(p, nu)
    if sample.n < p + 4:
        raise InvalidInputError(f"rule-of-thumb selector needs n >= {p + 4}")
    warnings = [] if warnings is None else warnings
    grid = np.atleast_1d(np.asarray(eval, dtype=float))
    if target == "mse" and grid.size != 1:
        raise InvalidInputError("mse target takes a single evaluation point")
    poly, sigma2 = _global_fit(sample, p + 3)
    fns = [_rot_pointwise(sample, x0, p, nu, kernel, poly, sigma2) for x0 in grid]
    odd = (p - nu) % 2 == 1
    n = sample.n

    def objective(h):
        cs = np.array([fn(h) for fn in fns])
        b2 = np.zeros(len(fns)) if odd else cs[:, 1]
        return mse_objective(h, cs[:, 0], b2, cs[:, 2], n, p, nu)

    floor = max(bwcheck_floor(sample, x0, min(bwcheck, n)) for x0 in grid) if bwcheck else 0.0
    lo, hi = _search_bounds(sample, floor)
    cs = np.array([fn(hi) for fn in fns])
    vbar = float(np.mean(cs[:, 2]))

    def solve():
        if float(np.mean(cs[:, 0] ** 2) + np.mean(cs[:, 1] ** 2)) <= FLAT_TOL * max(vbar, 1.0):
            raise FlatObjectiveError("rule-of-thumb bias constants vanish")
        return argmin_positive(objective, lo, hi)

    h = _guarded(solve, max(floor, lo), strict, warnings)
    return max(_cap(h, sample), floor)


def h_ce_dpi(sample: Sample, eval: float, p: int = 1, nu: int = 0, kernel="epa",
             vce: Optional[VceSpec] = None, rho: float = 1.0, bwcheck: int = 21,
             pilot: Optional[Pilot] = None, strict: bool = False,
             warnings: Optional[list] = None) -> float:
    """Direct plug-in coverage-error-optimal bandwidth (odd p only).

    The squared-bias term uses the fixed-n bias of the bias-corrected
    estimator standardized by its robust variance; the 1/(nh) term uses the
    standardized fourth moment of the Studentized statistic. The terms in
    ``h^(p+2)`` are set to zero.
    """
    if p % 2 == 0:
        raise UnsupportedMethodError("ce-dpi requires odd p; use ce-rot for even p")
    _check_orders(p, nu)
    vce = vce or VceSpec()
    warnings = [] if warnings is None else warnings
    pilot = pilot or Pilot.build(sample, p, kernel, vce)
    k = _dpi_constants(sample, eval, p, nu, kernel, vce, pilot, bwcheck)
    c = k["c"]
    cache_p = k["cache"]
    cache_q = build_design(sample, eval, c / rho, p + 1, kernel)
    idx, w = bc_weights(cache_p, cache_q, nu)
    sig = rbc_sigma(vce, sample, cache_p, cache_q, pilot.nn_res)
    var = sig.quad(w)
    n = sample.n
    s2 = sig.diag if sig.diag is not None else sig.factor * sig.scores ** 2
    floor = bwcheck_floor(sample, eval, min(bwcheck, n)) if bwcheck else 0.0
    lo, hi = _search_bounds(sample, floor)

    def solve():
        if var <= 0:
            raise FlatObjectiveError("robust variance is zero")
        e1 = n * c * float(np.sum(w ** 4 * s2 ** 2)) / var ** 2
        u = (sample.x[idx] - eval) / c
        m2 = k["derivs"]["d_p2"]
        m3 = float(pilot.poly.deriv(p + 3)(eval))
        scale = c ** (-(p + 2 - nu))
        bias2 = scale * float(w @ u ** (p + 2)) * c ** (p + 2) * m2 / math.factorial(p + 2)
        bias3 = scale / c * float(w @ u ** (p + 3)) * c ** (p + 3) * m3 / math.factorial(p + 3)
        vconst = n * c ** (1 + 2 * nu) * var
        e2 = bias2 / math.sqrt(vconst)
        e3 = bias3 / math.sqrt(vconst)
        if e2 * e2 + (c * e3) ** 2 <= FLAT_TOL:
            raise FlatObjectiveError("bias-corrected bias constants vanish")
        return ce_argmin(e1, e2, e3, n, p, lo, hi)

    h = _guarded(solve, max(floor, lo), strict, warnings)
    h = _cap(h, sample)
    return apply_bwcheck(h, sample, eval, bwcheck) if bwcheck else h


def _check_orders(p, nu):
    if p < 0 or nu < 0 or nu > p:
        raise InvalidInputError(f"need 0 <= nu <= p, got p={p}, nu={nu}")


# --------------------------------------------------------------------------
# grid-level driver


def select_bandwidths(sample: Sample, grid, method: str = "imse-dpi", p: int = 1, nu: int = 0,
                      kernel="epa", vce: Optional[VceSpec] = None, interior: bool = False,
                      bwcheck: int = 21, rho: float = 1.0) -> List[BandwidthChoice]:
    """Select h (and b = h/rho) for every grid point with the named method.

    Per-point failures produce a choice with ``h = nan`` and a warning flag
    instead of aborting the whole grid.
    """
    method = method.lower()
    if method not in METHODS:
        raise InvalidInputError(f"unknown bwselect {method!r}; expected one of {', '.join(METHODS)}")
    if method == "ce-dpi" and p % 2 == 0:
        raise UnsupportedMethodError("ce-dpi requires odd p; use ce-rot for even p")
    if rho <= 0:
        raise InvalidInputError("rho must be positive")
    _check_orders(p, nu)
    vce = vce or VceSpec()
    vce.check(sample)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if bwcheck and bwcheck > sample.n:
        raise InvalidInputError(f"bwcheck={bwcheck} exceeds the sample size {sample.n}")
    pilot = None
    if method.endswith("dpi") or method == "ce-rot":
        pilot = Pilot.build(sample, p, kernel, vce)

    if method in ("imse-dpi", "imse-rot"):
        warns: list = []
        try:
            if method == "imse-dpi":
                h = h_imse_dpi(sample, grid, p, nu, kernel, vce, interior, bwcheck, pilot,
                               warnings=warns)
            else:
                h = h_rot(sample, grid, p, nu, kernel, "imse", bwcheck, warnings=warns)
        except SmoothingError as exc:
            h = float("nan")
            warns.append(_flag(exc))
        return [BandwidthChoice(method, float(x0), h, h / rho, list(warns)) for x0 in grid]

    out = []
    for x0 in grid:
        warns = []
        try:
            if method == "mse-dpi":
                h = h_mse_dpi(sample, x0, p, nu, kernel, vce, interior, bwcheck, pilot,
                              warnings=warns)
            elif method == "mse-rot":
                h = h_rot(sample, x0, p, nu, kernel, "mse", bwcheck, warnings=warns)
            elif method == "ce-rot":
                hm = h_mse_dpi(sample, x0, p, nu, kernel, vce, interior, bwcheck, pilot,
                               warnings=warns)
                h = h_ce_rot(hm, sample.n, p)
                if bwcheck:
                    h = apply_bwcheck(h, sample, x0, bwcheck)
            else:
                h = h_ce_dpi(sample, x0, p, nu, kernel, vce, rho, bwcheck, pilot,
                             warnings=warns)
        except SmoothingError as exc:
            h = float("nan")
            warns.append(_flag(exc))
        out.append(BandwidthChoice(method, float(x0), h, h / rho, warns))
    return out


def _flag(exc: Exception) -> str:
    name = type(exc).__name__
    return {
        "SingularDesignError": "singular-design",
        "FlatObjectiveError": "flat-objective",
        "DegenerateLeverageError": "degenerate-leverage",
    }.get(name, "bandwidth-failed")
