"""Log-grid search followed by golden-section refinement."""

import math

import numpy as np

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, a, b, tol=1e-12, max_iter=500):
    """Minimize a unimodal ``f`` on ``[a, b]``; returns the abscissa."""
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def argmin_positive(f, lo, hi, npts=61, rtol=1e-8):
    """Minimize ``f(h)`` over ``h`` in ``[lo, hi]``, both positive.

    A logarithmic grid of ``npts`` points locates the basin; golden-section
    search on ``log h`` then refines to relative tolerance ``rtol``.
    """
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got [{lo}, {hi}]")
    grid = np.geomspace(lo, hi, npts)
    vals = np.array([f(h) for h in grid])
    if not np.any(np.isfinite(vals)):
        raise ValueError("objective is not finite anywhere on the search grid")
    vals = np.where(np.isfinite(vals), vals, np.inf)
    k = int(np.argmin(vals))
    a = math.log(grid[max(k - 1, 0)])
    b = math.log(grid[min(k + 1, npts - 1)])
    scale = vals[k] if vals[k] > 0 else 1.0

    def g(t):
        return f(math.exp(t)) / scale

    t = golden_section(g, a, b, tol=rtol * 1e-2)
    h = math.exp(t)
    # golden section cannot leave [a, b]; keep an endpoint if it is better
    if k == 0 and f(lo) <= f(h):
        return lo
    if k == npts - 1 and f(hi) <= f(h):
        return hi
    return h
