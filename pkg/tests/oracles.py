"""Independent reference computations used by the test-suite."""
import itertools
import math

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.stats import norm


def bernoulli_kl(p, q, p0=None, q0=None):
    """Divergence of Bernoulli(q) from Bernoulli(p); the complements may be
    passed separately to avoid cancellation."""
    p0 = 1 - p if p0 is None else p0
    q0 = 1 - q if q0 is None else q0
    total = 0.0
    for a, b in ((p, q), (p0, q0)):
        if a > 0:
            if b <= 0:
                return math.inf
            total += a * math.log(a / b)
    return total


def enumerate_binary_maximin(probs, m, competitors=None):
    """Exact maximin over mixtures of at most two deterministic binary
    quantizers of a finite support, by brute force over all 2^s cell maps.

    ``probs`` is an (M, s) array; returns the best objective value.
    """
    probs = np.asarray(probs, dtype=float)
    M, s = probs.shape
    if competitors is None:
        competitors = [j for j in range(M) if j != m]
    rows = []
    for bits in itertools.product((0, 1), repeat=s):
        bits = np.asarray(bits, dtype=float)
        one, zero = probs @ bits, probs @ (1 - bits)
        rows.append([bernoulli_kl(one[m], one[j], zero[m], zero[j]) for j in competitors])
    rows = np.unique(np.asarray(rows), axis=0)
    best = rows.min(axis=1).max()
    if len(competitors) == 1:
        return best
    # every pair, mixed at every breakpoint of the piecewise-linear minimum
    for a, b in itertools.combinations(range(len(rows)), 2):
        A, Bv = rows[a], rows[b]
        ps = [0.0, 1.0]
        for i, j in itertools.combinations(range(len(competitors)), 2):
            den = (A[i] - Bv[i]) - (A[j] - Bv[j])
            if den != 0:
                p = (Bv[j] - Bv[i]) / den
                if 0 < p < 1:
                    ps.append(p)
        for p in ps:
            best = max(best, np.min(p * A + (1 - p) * Bv))
    return best


def gaussian_ulq_pmf(a, means, stddevs, lo=-14.0, hi=14.0, n=20001):
    """Cell probabilities of ``I(sum a_m f_m(x) > 0)`` under each Gaussian,
    from sign changes on a fine grid located with Brent's method and cell
    masses integrated by adaptive quadrature."""
    a = np.asarray(a, dtype=float)

    def g(x):
        return float(sum(ai * norm.pdf(x, mu, sd) for ai, mu, sd in zip(a, means, stddevs)))

    xs = np.linspace(lo, hi, n)
    vals = sum(ai * norm.pdf(xs, mu, sd) for ai, mu, sd in zip(a, means, stddevs))
    roots = [brentq(g, xs[i], xs[i + 1], xtol=1e-14)
             for i in range(n - 1) if vals[i] * vals[i + 1] < 0]
    edges = [-np.inf, *roots, np.inf]
    out = np.zeros((2, len(means)))
    for lo_e, hi_e in zip(edges, edges[1:]):
        mid = 0.0 if np.isinf(lo_e) and np.isinf(hi_e) else (
            hi_e - 1.0 if np.isinf(lo_e) else lo_e + 1.0 if np.isinf(hi_e) else 0.5 * (lo_e + hi_e))
        cell = int(g(mid) > 0)
        for m, (mu, sd) in enumerate(zip(means, stddevs)):
            mass, _ = integrate.quad(norm.pdf, lo_e, hi_e, args=(mu, sd), epsabs=1e-14, epsrel=1e-12)
            out[cell, m] += mass
    return out
