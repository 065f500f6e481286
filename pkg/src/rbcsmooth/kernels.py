"""Compactly supported kernels on [-1, 1] and their moment constants."""

from __future__ import annotations

import enum
import math
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import InvalidInputError


class KernelType(str, enum.Enum):
    EPANECHNIKOV = "epa"
    TRIANGULAR = "tri"
    UNIFORM = "uni"

    @classmethod
    def parse(cls, value) -> "KernelType":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "epa": cls.EPANECHNIKOV,
            "epanechnikov": cls.EPANECHNIKOV,
            "tri": cls.TRIANGULAR,
            "triangular": cls.TRIANGULAR,
            "uni": cls.UNIFORM,
            "uniform": cls.UNIFORM,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InvalidInputError(
                f"unknown kernel {value!r}; expected one of epa, tri, uni"
            ) from None


def kernel_weights(u, kernel) -> np.ndarray:
    """Vectorized kernel evaluation; zero outside [-1, 1]."""
    kernel = KernelType.parse(kernel)
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    inside = a <= 1.0
    if kernel is KernelType.EPANECHNIKOV:
        out = 0.75 * (1.0 - u * u)
    elif kernel is KernelType.TRIANGULAR:
        out = 1.0 - a
    else:
        out = np.full_like(u, 0.5)
    return np.where(inside, out, 0.0)


def kernel_weight(u: float, kernel) -> float:
    """Evaluate K(u) for a single finite argument.

    >>> kernel_weight(0.0, "epa")
    0.75
    """
    u = float(u)
    if not math.isfinite(u):
        raise InvalidInputError(f"kernel argument must be finite, got {u}")
    return float(kernel_weights(u, kernel))


_CLOSED_FORM = {
    KernelType.EPANECHNIKOV: (0.2, 0.6),
    KernelType.TRIANGULAR: (1.0 / 6.0, 2.0 / 3.0),
    KernelType.UNIFORM: (1.0 / 3.0, 0.5),
}


def kernel_constants(kernel) -> dict:
    """Return ``{"mu2": int u^2 K, "rk": int K^2}`` for a kernel."""
    mu2, rk = _CLOSED_FORM[KernelType.parse(kernel)]
    return {"mu2": mu2, "rk": rk}


def quad_kernel_constants(kernel) -> dict:
    """Adaptive-quadrature counterpart of :func:`kernel_constants`."""
    kernel = KernelType.parse(kernel)

    def k(u):
        return float(kernel_weights(u, kernel))

    opts = dict(points=[0.0], epsabs=1e-13, epsrel=1e-12, limit=200)
    mass = integrate.quad(k, -1, 1, **opts)[0]
    mu2 = integrate.quad(lambda u: u * u * k(u), -1, 1, **opts)[0]
    rk = integrate.quad(lambda u: k(u) ** 2, -1, 1, **opts)[0]
    return {"mass": mass, "mu2": mu2, "rk": rk}


def normal_reference_constant(kernel) -> float:
    """Scale factor c in h = c * sigma * n^(-1/5) for a normal reference density."""
    c = kernel_constants(kernel)
    return (8.0 * math.sqrt(math.pi) * c["rk"] / (3.0 * c["mu2"] ** 2)) ** 0.2


# Biweight second derivative, used wherever a smooth derivative kernel is needed.
def biweight(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 15.0 / 16.0 * (1.0 - u * u) ** 2, 0.0)


def biweight_dd(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 15.0 / 4.0 * (3.0 * u * u - 1.0), 0.0)


BIWEIGHT_MU2 = 1.0 / 7.0
BIWEIGHT_DD_RK = 22.5


@lru_cache(maxsize=None)
def _gauss_legendre(npts: int):
    return np.polynomial.legendre.leggauss(npts)


def moment_matrices(kernel, p: int, lo: float = -1.0, hi: float = 1.0):
    """Kernel moment objects of order ``p`` integrated over ``[lo, hi]``.

    Returns ``(gamma, lam1, lam2, psi)`` where ``gamma = int r r' K``,
    ``lam1 = int r u^(p+1) K``, ``lam2 = int r u^(p+2) K`` and
    ``psi = int r r' K^2``. The limits are clipped to the kernel support.
    Integrals are polynomial-times-piecewise-polynomial so Gauss-Legendre
    on each smooth piece is exact.
    """
    return _moments(KernelType.parse(kernel), int(p), max(float(lo), -1.0), min(float(hi), 1.0))


@lru_cache(maxsize=1024)
def _moments(kernel, p, lo, hi):
    if hi <= lo:
        z = np.zeros((p + 1, p + 1))
        out = (z, np.zeros(p + 1), np.zeros(p + 1), z.copy())
        for a in out:
            a.setflags(write=False)
        return out
    pieces = [(lo, hi)]
    if lo < 0.0 < hi:
        pieces = [(lo, 0.0), (0.0, hi)]
    nodes, wts = _gauss_legendre(2 * p + 8)
    us, ws = [], []
    for a, b in pieces:
        if b <= a:
            continue
        us.append(0.5 * (b - a) * nodes + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * wts)
    u = np.concatenate(us)
    w = np.concatenate(ws)
    k = kernel_weights(u, kernel)
    r = np.vander(u, p + 1, increasing=True)
    gamma = (r * (w * k)[:, None]).T @ r
    psi = (r * (w * k * k)[:, None]).T @ r
    lam1 = r.T @ (w * k * u ** (p + 1))
    lam2 = r.T @ (w * k * u ** (p + 2))
    out = (gamma, lam1, lam2, psi)
    for a in out:
        a.setflags(write=False)  # shared through the cache
    return out
