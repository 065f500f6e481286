"""Residuals, heteroskedasticity/cluster-robust Sigma-hat and sandwich variances."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateLeverageError, InvalidInputError
from .lpcore import DesignCache, Sample, bc_weights, estimator_weights, local_coefficients

LEVERAGE_MAX = 1.0 - 1e-10


class VceKind(str, enum.Enum):
    HC0 = "hc0"
    HC1 = "hc1"
    HC2 = "hc2"
    HC3 = "hc3"
    NN = "nn"
    CLUSTER = "cluster"
    NNCLUSTER = "nncluster"

    @property
    def uses_nn(self) -> bool:
        return self in (VceKind.NN, VceKind.NNCLUSTER)

    @property
    def clustered(self) -> bool:
        return self in (VceKind.CLUSTER, VceKind.NNCLUSTER)


@dataclass(frozen=True)
class VceSpec:
    kind: VceKind = VceKind.NN
    nnmatch: int = 3

    def __post_init__(self):
        try:
            kind = VceKind(str(getattr(self.kind, "value", self.kind)).lower())
        except ValueError:
            raise InvalidInputError(
                f"unknown vce {self.kind!r}; expected one of "
                + ", ".join(k.value for k in VceKind)
            ) from None
        object.__setattr__(self, "kind", kind)
        if int(self.nnmatch) < 1:
            raise InvalidInputError("nnmatch must be >= 1")

    def check(self, sample: Sample):
        if self.kind.clustered and sample.cluster is None:
            raise InvalidInputError(f"vce={self.kind.value} requires cluster labels")
        if self.kind.uses_nn and self.nnmatch >= sample.n:
            raise InvalidInputError(f"nnmatch={self.nnmatch} must be smaller than n={sample.n}")


@dataclass
class SigmaHat:
    """Diagonal or cluster-block estimate of the error covariance on a window.

    ``diag`` holds per-observation variance weights; for clustered kinds
    ``scores`` holds residuals grouped by ``labels`` and ``factor`` the
    degrees-of-freedom adjustment.
    """

    idx: np.ndarray
    diag: Optional[np.ndarray] = None
    scores: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    factor: float = 1.0

    @property
    def clustered(self) -> bool:
        return self.labels is not None

    def quad(self, w) -> float:
        """Quadratic form ``w' Sigma w`` for weights aligned with ``idx``."""
        w = np.asarray(w, dtype=float)
        if not self.clustered:
            return float(np.sum(w * w * self.diag))
        _, inv = np.unique(self.labels, return_inverse=True)
        sums = np.bincount(inv.ravel(), weights=w * self.scores)
        return float(self.factor * np.sum(sums * sums))


def residuals_plugin(cache: DesignCache, y_local, p: Optional[int] = None) -> np.ndarray:
    """Residuals of the local order-p fit for the in-window observations."""
    y_local = np.asarray(y_local, dtype=float)
    beta = local_coefficients(cache, y_local)
    return y_local - cache.r @ beta


def residuals_nn(sample, j: int) -> np.ndarray:
    """Nearest-neighbour residuals, computed once for the whole sample.

    Each residual is ``sqrt(M/(M+1)) * (y_i - mean of y over the M nearest
    neighbours of x_i)``, excluding ``i`` itself. All observations tied at
    the j-th neighbour distance are included, so ``M >= j``.
    """
    x = sample.x if isinstance(sample, Sample) else np.asarray(sample[0], dtype=float)
    y = sample.y if isinstance(sample, Sample) else np.asarray(sample[1], dtype=float)
    n = x.size
    j = int(j)
    if j < 1 or n <= j:
        raise InvalidInputError(f"nnmatch={j} requires 1 <= nnmatch < n={n}")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    pos = np.arange(n)
    offsets = np.concatenate([np.arange(-j, 0), np.arange(1, j + 1)])
    cand = pos[:, None] + offsets[None, :]
    valid = (cand >= 0) & (cand < n)
    dist = np.where(valid, np.abs(xs[np.clip(cand, 0, n - 1)] - xs[:, None]), np.inf)
    dj = np.partition(dist, j - 1, axis=1)[:, j - 1]
    # distances are recomputed differences, so widen by a few ulps to keep ties
    slack = 8.0 * np.finfo(float).eps * np.maximum(np.abs(xs), dj)
    lo = np.searchsorted(xs, xs - dj - slack, side="left")
    hi = np.searchsorted(xs, xs + dj + slack, side="right")
    csum = np.concatenate([[0.0], np.cumsum(ys)])
    m = hi - lo - 1
    nbr_mean = (csum[hi] - csum[lo] - ys) / m
    res_sorted = np.sqrt(m / (m + 1.0)) * (ys - nbr_mean)
    out = np.empty(n)
    out[order] = res_sorted
    return out


def _assemble(kind: VceKind, idx, residuals, leverage, nparams, labels) -> SigmaHat:
    residuals = np.asarray(residuals, dtype=float)
    n_loc = residuals.size
    if kind.clustered:
        if labels is None:
            raise InvalidInputError(f"vce={kind.value} requires cluster labels")
        factor = 1.0
        if kind is VceKind.CLUSTER:
            g = np.unique(labels).size
            if g < 2 or n_loc <= nparams:
                raise InvalidInputError(
                    f"cluster variance needs >= 2 clusters and more than {nparams} "
                    f"observations in the window (got {g} clusters, {n_loc} obs)"
                )
            factor = g / (g - 1.0) * (n_loc - 1.0) / (n_loc - nparams)
        return SigmaHat(idx=idx, scores=residuals, labels=np.asarray(labels), factor=factor)
    e2 = residuals * residuals
    if kind in (VceKind.HC0, VceKind.NN):
        return SigmaHat(idx=idx, diag=e2)
    if kind is VceKind.HC1:
        if n_loc <= nparams:
            raise InvalidInputError(
                f"HC1 needs more than {nparams} observations in the window (got {n_loc})"
            )
        return SigmaHat(idx=idx, diag=e2 * n_loc / (n_loc - nparams))
    lev = np.clip(np.asarray(leverage, dtype=float), 0.0, None)
    if np.any(lev >= LEVERAGE_MAX):
        raise DegenerateLeverageError(
            "a local leverage is numerically 1 (interpolating fit); use hc0/hc1/nn"
        )
    if kind is VceKind.HC2:
        return SigmaHat(idx=idx, diag=e2 / (1.0 - lev))
    return SigmaHat(idx=idx, diag=e2 / (1.0 - lev) ** 2)


def sigma_hat(vce: VceSpec, cache: DesignCache, residuals, p: Optional[int] = None,
              cluster=None) -> SigmaHat:
    """Sigma-hat on the window of ``cache`` from residuals aligned with ``cache.idx``.

    ``cluster`` holds the labels of the in-window observations (required for
    the clustered kinds).
    """
    p = cache.p if p is None else p
    lev = cache.hat_diag() if vce.kind in (VceKind.HC2, VceKind.HC3) else None
    return _assemble(vce.kind, cache.idx, residuals, lev, p + 1, cluster)


def conventional_variance(cache: DesignCache, sigma: SigmaHat, nu: int) -> float:
    """Fixed-n variance of the nu-th derivative estimate."""
    w = estimator_weights(cache, nu)
    if sigma.idx.size != cache.idx.size or not np.array_equal(sigma.idx, cache.idx):
        raise InvalidInputError("Sigma-hat is not aligned with the design window")
    return max(sigma.quad(w), 0.0)


def rbc_variance(cache_p: DesignCache, cache_q: DesignCache, sigma: SigmaHat,
                 rho: Optional[float] = None, nu: int = 0) -> float:
    """Fixed-n variance of the bias-corrected estimate (robust Studentization)."""
    if rho is not None and not math.isclose(rho, cache_p.h / cache_q.h, rel_tol=1e-9):
        raise InvalidInputError(f"rho={rho} inconsistent with h/b={cache_p.h / cache_q.h}")
    idx, w = bc_weights(cache_p, cache_q, nu)
    if not np.array_equal(sigma.idx, idx):
        raise InvalidInputError("Sigma-hat must live on the union of the h- and b-windows")
    return max(sigma.quad(w), 0.0)


def rbc_sigma(vce: VceSpec, sample: Sample, cache_p: DesignCache, cache_q: DesignCache,
              nn_res: Optional[np.ndarray] = None) -> SigmaHat:
    """Sigma-hat on the union window used by :func:`rbc_variance`.

    Plug-in kinds take residuals from the order-(p+1) fit at bandwidth b,
    evaluated at every union observation.
    """
    idx = np.union1d(cache_p.idx, cache_q.idx)
    labels = sample.cluster[idx] if sample.cluster is not None else None
    if vce.kind.uses_nn:
        if nn_res is None:
            nn_res = residuals_nn(sample, vce.nnmatch)
        return _assemble(vce.kind, idx, nn_res[idx], None, cache_q.p + 1, labels)
    beta = local_coefficients(cache_q, sample.y[cache_q.idx])
    u = (sample.x[idx] - cache_q.eval) / cache_q.h
    fitted = np.vander(u, cache_q.p + 1, increasing=True) @ beta
    res = sample.y[idx] - fitted
    lev = None
    if vce.kind in (VceKind.HC2, VceKind.HC3):
        lev = np.zeros(idx.size)
        lev[np.searchsorted(idx, cache_q.idx)] = cache_q.hat_diag()
    return _assemble(vce.kind, idx, res, lev, cache_q.p + 1, labels)


def conventional_sigma(vce: VceSpec, sample: Sample, cache: DesignCache,
                       nn_res: Optional[np.ndarray] = None) -> SigmaHat:
    """Sigma-hat on the h-window for the conventional variance."""
    labels = sample.cluster[cache.idx] if sample.cluster is not None else None
    if vce.kind.uses_nn:
        if nn_res is None:
            nn_res = residuals_nn(sample, vce.nnmatch)
        res = nn_res[cache.idx]
    else:
        res = residuals_plugin(cache, sample.y[cache.idx])
    return sigma_hat(vce, cache, res, cache.p, cluster=labels)
