"""Small scalar solvers shared by the quantizer and maximin code."""
import math

import numpy as np
from scipy.special import xlogy

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2


def golden_max(f, a, b, tol=1e-8):
    """Golden-section search for the maximizer of a unimodal ``f`` on [a, b]."""
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return x, f(x)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    yc, yd = f(c), f(d)
    for _ in range(n - 1):
        h *= INV_PHI
        if yc > yd:
            b, d, yd = d, c, yc
            c = a + INV_PHI2 * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            d = a + INV_PHI * h
            yd = f(d)
    return (c, yc) if yc > yd else (d, yd)


def bisect_sign(g, lo, hi, tol=1e-12):
    """Vectorized bisection: ``g(lo)`` and ``g(hi)`` differ in truth value.

    ``g`` maps an array of points to a boolean array; the returned points
    bracket each switch to within ``tol``.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    left = g(lo)
    # widths shrink geometrically; the cap only guards against tol=0
    for _ in range(200):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        same = g(mid) == left
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def kl_columns(q: np.ndarray, m: int) -> np.ndarray:
    """Divergences of every column of the pmf matrix ``q`` (cells x states)
    from column ``m``; ``inf`` where the reference puts mass on a cell the
    other state cannot produce."""
    p = q[:, m:m + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = xlogy(p, p) - xlogy(p, q)
    terms = np.where((p > 0) & (q == 0), np.inf, terms)
    return np.maximum(terms.sum(axis=0), 0.0)


def kl_pmf(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(kl_columns(np.stack([p, q], axis=1), 0)[1])
