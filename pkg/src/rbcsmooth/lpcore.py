"""Local polynomial design matrices, point estimates and bias components.

All matrix objects use normalized regressors ``r_p((X_i - x)/h)`` and the
``1/n_eff`` normalization (sum over in-window observations). Derivative
estimates are mapped back to the original units through ``nu! * h**-nu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import InvalidInputError, SingularDesignError
from .kernels import KernelType, kernel_weights

RCOND_MIN = 1e-12


@dataclass(frozen=True)
class Sample:
    """Paired observations ``(x_i, y_i)`` with optional cluster labels."""

    x: np.ndarray
    y: np.ndarray
    cluster: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float).ravel()
        y = np.ascontiguousarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise InvalidInputError(f"x and y lengths differ ({x.size} vs {y.size})")
        if x.size < 2:
            raise InvalidInputError("a sample needs at least 2 observations")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInputError("x and y must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.cluster is not None:
            c = np.asarray(self.cluster).ravel()
            if c.size != x.size:
                raise InvalidInputError("cluster labels must have the same length as x")
            object.__setattr__(self, "cluster", c)

    @property
    def n(self) -> int:
        return self.x.size


@dataclass
class DesignCache:
    """Precomputed local design at one evaluation point and bandwidth."""

    eval: float
    h: float
    p: int
    kernel: KernelType
    idx: np.ndarray  # in-window observation indices, |X_i - eval| <= h
    u: np.ndarray  # normalized distances for idx
    kw: np.ndarray  # K(u) / h for idx
    r: np.ndarray  # n_eff x (p+1) normalized regressors
    gram: np.ndarray
    rw: np.ndarray  # (p+1) x n_eff, R'W
    lvec: np.ndarray
    lvec_next: np.ndarray
    _chol: tuple = field(repr=False, default=None)

    @property
    def n_eff(self) -> int:
        return int(self.idx.size)

    def solve(self, rhs):
        return linalg.cho_solve(self._chol, rhs)

    def row(self, j: int) -> np.ndarray:
        """Row ``j`` of ``G^-1``."""
        e = np.zeros(self.p + 1)
        e[j] = 1.0
        return self.solve(e)

    def coef_weights(self, j: int) -> np.ndarray:
        """Weights ``w`` over ``idx`` with normalized coefficient j = w @ y."""
        return self.row(j) @ self.rw / self.n_eff

    def hat_diag(self) -> np.ndarray:
        """Leverages of the local kernel-weighted least squares fit."""
        ginv_r = self.solve(self.r.T)
        return self.kw * np.einsum("ij,ji->i", self.r, ginv_r) / self.n_eff


def effective_n(sample, eval: float, h: float) -> int:
    """Number of observations with ``|X_i - eval| <= h``."""
    x = sample.x if isinstance(sample, Sample) else np.asarray(sample, dtype=float)
    return int(np.count_nonzero(np.abs(x - eval) <= h))


def build_design(sample, eval: float, h: float, p: int, kernel) -> DesignCache:
    """Assemble ``G_p``, ``R_p'W_p``, ``L_p`` and ``L_{p+1}`` at ``eval``.

    Raises
    ------
    SingularDesignError
        If fewer than ``p + 2`` observations fall in the window or the
        Gram matrix has reciprocal condition number below 1e-12.
    """
    h = float(h)
    if not math.isfinite(h) or h <= 0:
        raise InvalidInputError(f"bandwidth must be positive and finite, got {h}")
    if p < 0:
        raise InvalidInputError("polynomial order p must be >= 0")
    kernel = KernelType.parse(kernel)
    x = sample.x if isinstance(sample, Sample) else np.asarray(sample, dtype=float)
    idx = np.flatnonzero(np.abs(x - eval) <= h)
    if idx.size < p + 2:
        raise SingularDesignError(
            f"only {idx.size} observations within h={h:.6g} of x={eval:.6g}; "
            f"need at least {p + 2}",
            eval_point=eval,
            bandwidth=h,
        )
    u = (x[idx] - eval) / h
    kw = kernel_weights(u, kernel) / h
    r = np.vander(u, p + 2, increasing=True)
    upow = r[:, p + 1]
    r = r[:, : p + 1]
    rw = r.T * kw
    n_eff = idx.size
    gram = rw @ r / n_eff
    lvec = rw @ upow / n_eff
    lvec_next = rw @ (upow * u) / n_eff
    chol = _factor(gram, eval, h)
    return DesignCache(eval, h, p, kernel, idx, u, kw, r, gram, rw, lvec, lvec_next, chol)


def _factor(gram, eval, h):
    with np.errstate(all="ignore"):
        rcond = 1.0 / np.linalg.cond(gram)
    if not np.isfinite(rcond) or rcond < RCOND_MIN:
        raise SingularDesignError(
            f"local design is numerically singular at x={eval:.6g} (h={h:.6g})",
            eval_point=eval,
            bandwidth=h,
        )
    try:
        return linalg.cho_factor(gram, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise SingularDesignError(
            f"local design is not positive definite at x={eval:.6g} (h={h:.6g})",
            eval_point=eval,
            bandwidth=h,
        ) from None


def estimator_weights(cache: DesignCache, nu: int) -> np.ndarray:
    """Weights over ``cache.idx`` such that the nu-th derivative estimate is ``w @ y``."""
    if nu > cache.p:
        raise InvalidInputError(f"derivative order {nu} exceeds polynomial order {cache.p}")
    return math.factorial(nu) * cache.h ** (-nu) * cache.coef_weights(nu)


def point_estimate(cache: DesignCache, y_local, nu: int) -> float:
    """Local polynomial estimate of the ``nu``-th derivative at ``cache.eval``."""
    return float(estimator_weights(cache, nu) @ np.asarray(y_local, dtype=float))


def local_coefficients(cache: DesignCache, y_local) -> np.ndarray:
    """Normalized coefficient vector ``G^-1 R'W y / n_eff``."""
    return cache.solve(cache.rw @ np.asarray(y_local, dtype=float) / cache.n_eff)


def bias_components(cache_p: DesignCache, deriv_p1: float, deriv_p2: float, nu: int) -> dict:
    """Pre-asymptotic bias constants ``b1`` and ``b2``.

    The bias of the nu-th derivative estimate is approximately
    ``h**(p+1-nu) * (b1 + h * b2)``.
    """
    p = cache_p.p
    row = cache_p.row(nu)
    b1 = math.factorial(nu) / math.factorial(p + 1) * (row @ cache_p.lvec) * deriv_p1
    b2 = math.factorial(nu) / math.factorial(p + 2) * (row @ cache_p.lvec_next) * deriv_p2
    return {"b1": float(b1), "b2": float(b2)}


def bc_weights(cache_p: DesignCache, cache_q: DesignCache, nu: int):
    """Bias-corrected estimator as a linear smoother over the union window.

    Returns ``(idx, w)`` with ``idx`` sorted sample indices and the
    bias-corrected estimate equal to ``w @ y[idx]``. Built from the
    combined weighting matrix ``R_p'W_p - rho^(p+1) L_p e' G_q^-1 R_q'W_q``.
    """
    p = cache_p.p
    if cache_q.p != p + 1:
        raise InvalidInputError("bias-correction fit must have order p + 1")
    rho = cache_p.h / cache_q.h
    idx = np.union1d(cache_p.idx, cache_q.idx)
    pos_p = np.searchsorted(idx, cache_p.idx)
    pos_q = np.searchsorted(idx, cache_q.idx)
    xi = np.zeros((p + 1, idx.size))
    xi[:, pos_p] += cache_p.rw / cache_p.n_eff
    qrow = cache_q.coef_weights(p + 1)
    xi[:, pos_q] -= rho ** (p + 1) * np.outer(cache_p.lvec, qrow)
    w = math.factorial(nu) * cache_p.h ** (-nu) * (cache_p.row(nu) @ xi)
    return idx, w


def bc_point_estimate(sample: Sample, eval: float, h: float, b: float, p: int, nu: int, kernel) -> float:
    """Bias-corrected estimate of the ``nu``-th derivative at ``eval``."""
    cache_p = _named_design(sample, eval, h, p, kernel, "h")
    cache_q = _named_design(sample, eval, b, p + 1, kernel, "b")
    idx, w = bc_weights(cache_p, cache_q, nu)
    return float(w @ sample.y[idx])


def _named_design(sample, eval, bw, p, kernel, name):
    try:
        return build_design(sample, eval, bw, p, kernel)
    except SingularDesignError as exc:
        raise SingularDesignError(
            f"{name}-fit failed: {exc}", eval_point=eval, bandwidth=bw
        ) from None
