"""Maximin quantizers: search over randomizations of likelihood quantizers.

For a state ``m`` the maximin quantizer maximizes the smallest divergence
``min_{m2} I(m, m2; phi)`` over all (randomized) quantizers, where the
divergence of a randomization is the weighted average of the divergences of
its components.  At most ``M - 1`` components are needed, so the search runs
over ``M - 1`` unambiguous likelihood quantizers (ULQs) and their weights:

1. a candidate pool of ULQs from quasi-random coefficient directions (plus
   the pairwise likelihood-ratio quantizers) is scored, and the best mixture
   over the whole pool is found by linear programming;
2. the coefficients of the chosen components are polished by coordinate
   perturbation with shrinking steps, re-solving the weights exactly at
   every trial point.

When a single pairwise quantizer already dominates all other competitors
(:func:`lemma_shortcut`) the search is skipped.
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog
from scipy.special import ndtri, xlogy
from scipy.stats import qmc

from .errors import ConfigError
from .models import FiniteSupport, HypothesisSet
from .numerics import golden_max, kl_columns
from .quantizers import (CellMapQuantizer, IntervalQuantizer, QuantizerVector,
                         RandomizedQuantizer, ULQQuantizer, induced_pmf, randomized_divergences,
                         scan_grid, ulq_partitions)

log = logging.getLogger(__name__)

SEARCH_SEED = 20240611
INF_CAP = 1e9


class MultimodalObjectiveWarning(RuntimeWarning):
    """The pairwise divergence has several local maxima over the threshold."""


@dataclass(frozen=True)
class Certificate:
    kind: str  # "lemma_shortcut", "search_optimum" or "oracle"
    competitor: int = None
    trace: tuple = ()


@dataclass(frozen=True)
class MaximinResult:
    state: int
    quantizer: RandomizedQuantizer
    info_number: float
    certificate: Certificate
    scope: str = "all"
    attained: bool = True
    divergences: tuple = field(default=(), compare=False)

    @property
    def thresholds(self) -> list:
        """Breakpoints of each component at sensor 0 (interval quantizers only)."""
        return [c[0].breakpoints for c in self.quantizer.components
                if isinstance(c[0], IntervalQuantizer)]


def _result(hs, m, rq, certificate, scope, attained=True):
    D = randomized_divergences(rq, hs)
    comp = hs.competitors(m, scope)
    return MaximinResult(m, rq, float(D[m, comp].min()), certificate, scope, attained,
                         tuple(float(v) for v in D[m]))


# -- pairwise likelihood-ratio quantizers ------------------------------------------

def _bkl(p, q, p0=None, q0=None):
    """Bernoulli divergence; pass the complements ``p0``, ``q0`` when they
    are available to avoid cancellation in ``1 - p``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p0 = 1 - p if p0 is None else np.asarray(p0, dtype=float)
    q0 = 1 - q if q0 is None else np.asarray(q0, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(p, p) - xlogy(p, q) + xlogy(p0, p0) - xlogy(p0, q0)
    return np.where(np.isnan(out), np.inf, np.maximum(out, 0.0))


def _local_maxima(values):
    v = np.asarray(values)
    idx = [i for i in range(len(v))
           if (i == 0 or v[i] >= v[i - 1]) and (i == len(v) - 1 or v[i] >= v[i + 1])]
    # collapse plateaus to one representative
    out = []
    for i in idx:
        if out and i == out[-1] + 1 and v[i] == v[out[-1]]:
            continue
        out.append(i)
    return out


def _multistart_max(f, grid, tol):
    vals = np.array([f(x) for x in grid])
    best = []
    for i in _local_maxima(vals):
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        best.append(golden_max(f, lo, hi, tol))
    best.sort(key=lambda t: -t[1])
    multimodal = len(best) > 1 and best[0][1] - best[-1][1] > 1e-6
    return best[0], multimodal


def pairwise_mlrq(hs: HypothesisSet, m: int, m2: int, k: int = 0, tol: float = 1e-8):
    """Deterministic binary quantizer maximizing ``I(m, m2; phi)`` at sensor ``k``.

    Equal-variance Gaussian pairs give a threshold ``I(X >= lam)`` located by
    golden-section search; other continuous pairs threshold the log
    likelihood ratio; finite supports are solved exactly over all cuts of
    the likelihood-ratio ordering.
    """
    if m == m2:
        raise ValueError("pairwise_mlrq needs two different states")
    d1, d2 = hs.densities[m][k], hs.densities[m2][k]
    if isinstance(d1, FiniteSupport):
        return _discrete_mlrq(d1, d2)
    if d1.stddev == d2.stddev:
        def obj(lam):
            z1 = (lam - d1.mean) / d1.stddev
            z2 = (lam - d2.mean) / d2.stddev
            return float(_bkl(_ncdf(-z1), _ncdf(-z2), _ncdf(z1), _ncdf(z2)))
        lo = min(d1.mean, d2.mean) - 6 * d1.stddev
        hi = max(d1.mean, d2.mean) + 6 * d1.stddev
        (lam, _), multimodal = _multistart_max(obj, np.linspace(lo, hi, 241), tol)
        if multimodal:
            warnings.warn(f"pairwise divergence {m}->{m2} is multimodal in the threshold",
                          MultimodalObjectiveWarning, stacklevel=2)
        return IntervalQuantizer.threshold(lam)
    return _llr_mlrq(hs, m, m2, k, tol)


def _ncdf(z):
    from scipy.special import ndtr
    return ndtr(z)


def _llr_coefficients(M, m, m2, t):
    a = np.zeros(M)
    a[m] = 1.0
    a[m2] = -math.exp(t)
    return a


def _llr_mlrq(hs, m, m2, k, tol):
    xs = scan_grid(hs, k, 2001)
    llr = hs.densities[m][k].logpdf(xs) - hs.densities[m2][k].logpdf(xs)
    lo, hi = float(np.min(llr)), float(np.max(llr))
    lo, hi = max(lo, -40.0), min(hi, 40.0)

    def make(t):
        return ulq_partitions(ULQQuantizer.binary(_llr_coefficients(hs.M, m, m2, t)).matrix[None],
                              hs, k)[0]

    def obj(t):
        pmf = induced_pmf(make(t), hs, k)
        return float(kl_columns(pmf, m)[m2])

    (t, _), multimodal = _multistart_max(obj, np.linspace(lo, hi, 81), tol)
    if multimodal:
        warnings.warn(f"pairwise divergence {m}->{m2} is multimodal in the threshold",
                      MultimodalObjectiveWarning, stacklevel=3)
    return make(t)


def _discrete_mlrq(d1: FiniteSupport, d2: FiniteSupport) -> CellMapQuantizer:
    p = np.asarray(d1.probs)
    q = np.asarray(d2.probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0, p / np.where(q > 0, q, 1), np.inf)
    ratio = np.where((p == 0) & (q == 0), 0.0, ratio)
    levels = np.unique(ratio)
    best, best_val = None, -1.0
    for cut in np.concatenate([[-1.0], levels]):
        cells = (ratio > cut).astype(int)
        val = float(_bkl(cells @ p, cells @ q, (1 - cells) @ p, (1 - cells) @ q))
        if val > best_val + 1e-15:
            best, best_val = cells, val
    return CellMapQuantizer(tuple(best), 2)


def mlrq_vector(hs: HypothesisSet, m: int, m2: int) -> QuantizerVector:
    """Per-sensor pairwise quantizers; divergences add over sensors, so the
    vector maximizes the pairwise divergence of the whole system."""
    return QuantizerVector(tuple(pairwise_mlrq(hs, m, m2, k) for k in range(hs.K)))


def lemma_shortcut(hs: HypothesisSet, m: int, scope: str = "all"):
    """Certified deterministic maximin quantizer, or ``None``.

    For each competitor ``m2`` the pairwise quantizer is built; if its
    divergence to ``m2`` is no larger than to any other competitor, no
    quantizer can beat it and it is returned.
    """
    comps = hs.competitors(m, scope)
    if not comps:
        raise ValueError(f"state {m} has no competitors")
    best = None
    for m2 in comps:
        vec = mlrq_vector(hs, m, m2)
        D = randomized_divergences(RandomizedQuantizer.deterministic(vec), hs)
        row = D[m, comps]
        target = D[m, m2]
        if np.all(row >= target - 1e-12 * max(1.0, target)):
            res = _result(hs, m, RandomizedQuantizer.deterministic(vec),
                          Certificate("lemma_shortcut", competitor=m2), scope)
            if best is None or res.info_number > best.info_number:
                best = res
    return best


# -- exact maximin weights -------------------------------------------------------------

def maximin_weights(V) -> tuple:
    """Weights ``p`` on the simplex maximizing ``min_c sum_j p_j V[j, c]``.

    Returns ``(p, value)``.  Two rows are solved in closed form; larger
    problems go through a dual-simplex LP whose basic solutions use at most
    as many rows as there are columns.
    """
    V = np.minimum(np.asarray(V, dtype=float), INF_CAP)
    J, C = V.shape
    if J == 1:
        return np.ones(1), float(V[0].min())
    if J == 2:
        a, b = V[0], V[1]
        cands = [0.0, 1.0]
        for i, j in itertools.combinations(range(C), 2):
            den = (a[i] - b[i]) - (a[j] - b[j])
            if den != 0:
                p = (b[j] - b[i]) / den
                if 0 < p < 1:
                    cands.append(p)
        ps = np.asarray(cands)
        vals = np.min(ps[:, None] * a + (1 - ps[:, None]) * b, axis=1)
        i = int(np.argmax(vals))
        return np.array([ps[i], 1 - ps[i]]), float(vals[i])
    c = np.zeros(J + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-V.T, np.ones((C, 1))])
    A_eq = np.hstack([np.ones((1, J)), np.zeros((1, 1))])
    bounds = [(0, None)] * J + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(C), A_eq=A_eq, b_eq=[1.0], bounds=bounds,
                  method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"maximin LP failed: {res.message}")
    p = np.maximum(res.x[:J], 0.0)
    p /= p.sum()
    return p, float(np.min(p @ V))


def _reduce_support(V, p, cap):
    idx = np.flatnonzero(p > 1e-12)
    if len(idx) <= cap:
        return idx, p[idx]
    idx = idx[np.argsort(-p[idx])[:cap]]
    w, _ = maximin_weights(V[idx])
    return idx, w


# -- candidate families ------------------------------------------------------------------

def _sphere_points(n, dim, seed):
    sob = qmc.Sobol(dim, scramble=True, seed=seed)
    u = sob.random_base2(int(math.ceil(math.log2(max(n, 2)))))[:n]
    z = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class ULQFamily:
    """ULQs parameterized by a unit coefficient vector (binary: length M,
    otherwise a flattened l x M matrix)."""

    name = "ulq"
    step0 = 0.05

    def __init__(self, M, alphabet=2):
        self.M = M
        self.l = alphabet
        self.dim = M if alphabet == 2 else alphabet * M

    def normalize(self, p):
        p = np.asarray(p, dtype=float)
        n = np.linalg.norm(p)
        return p / n if n > 0 else p

    def matrices(self, params):
        P = np.asarray(params, dtype=float).reshape(len(params), -1)
        if self.l == 2:
            return np.stack([np.zeros_like(P), -P], axis=1)
        return P.reshape(len(P), self.l, self.M)

    def realize(self, params, hs, k):
        mats = self.matrices(params)
        if hs.is_discrete(k):
            F = hs.density_matrix(k, np.arange(hs.densities[0][k].size))
            cells = np.argmin(np.einsum("xm,plm->pxl", F, mats), axis=2)
            return [CellMapQuantizer(tuple(c), self.l) for c in cells]
        return ulq_partitions(mats, hs, k)

    def initial(self, n, seed):
        return list(_sphere_points(n, self.dim, seed))


class ThresholdFamily:
    """``I(X >= lam)``."""

    name = "threshold"
    step0 = 0.1

    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi
        self.dim = 1

    def normalize(self, p):
        return np.clip(np.asarray(p, dtype=float), self.lo, self.hi)

    def realize(self, params, hs, k):
        return [hx2_ulq_forms(lam=float(p[0])) for p in params]

    def initial(self, n, seed):
        return [np.array([v]) for v in np.linspace(self.lo, self.hi, n)]


class IntervalFamily:
    """``I(lam1 <= X <= lam2)``."""

    name = "interval"
    step0 = 0.1

    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi
        self.dim = 2

    def normalize(self, p):
        return np.sort(np.clip(np.asarray(p, dtype=float), self.lo, self.hi))

    def realize(self, params, hs, k):
        return [hx2_ulq_forms(interval=(float(p[0]), float(p[1]))) for p in params]

    def initial(self, n, seed):
        g = np.linspace(self.lo, self.hi, max(int(math.isqrt(2 * n)), 2))
        return [np.array(pair) for pair in itertools.combinations(g, 2)][:n]


def hx2_ulq_forms(lam: float = None, interval: tuple = None) -> IntervalQuantizer:
    """Threshold ``I(X >= lam)`` or interval ``I(lam1 <= X <= lam2)`` quantizer.

    These two shapes exhaust the binary ULQs of a symmetric, equally spaced
    Gaussian triple up to relabelling of the messages.
    """
    if (lam is None) == (interval is None):
        raise ValueError("give exactly one of lam or interval")
    if lam is not None:
        return IntervalQuantizer.threshold(lam)
    lo, hi = interval
    if lo > hi:
        raise ValueError(f"interval endpoints out of order: {lo} > {hi}")
    if lo == hi:
        return IntervalQuantizer((), (0,), 2)
    return IntervalQuantizer((lo, hi), (0, 1, 0), 2)


def _families(hs, k, names, alphabet):
    out = []
    for name in names:
        if name == "ulq":
            out.append(ULQFamily(hs.M, alphabet))
            continue
        if hs.is_discrete(k) or alphabet != 2:
            raise ConfigError(f"family {name!r} needs a continuous sensor and binary messages")
        xs = scan_grid(hs, k)
        dens = hs.sensor_densities(k)
        lo = min(d.mean for d in dens) - 4 * max(d.stddev for d in dens)
        hi = max(d.mean for d in dens) + 4 * max(d.stddev for d in dens)
        del xs
        if name == "threshold":
            out.append(ThresholdFamily(lo, hi))
        elif name == "interval":
            out.append(IntervalFamily(lo, hi))
        else:
            raise ValueError(f"unknown quantizer family {name!r}")
    return out


def _arrangement_directions(F: np.ndarray, eps: float = 1e-7) -> list:
    """One coefficient vector per cell of the hyperplane arrangement
    ``{a : a . f(x) = 0}`` over the support points of a discrete sensor.

    Every cell touches a ray cut out by ``M - 1`` of the hyperplanes; walking
    off each such ray in every sign pattern reaches all adjacent cells.
    """
    s, M = F.shape
    out = []
    rows = [i for i in range(s) if np.any(F[i] > 0)]
    for S in itertools.combinations(rows, min(M - 1, len(rows))):
        FS = F[list(S)]
        _, sv, vt = np.linalg.svd(FS)
        if len(sv) < M - 1 or sv[-1] < 1e-10 * sv[0]:
            continue
        r = vt[-1]
        pinv = np.linalg.pinv(FS)
        for sign in (1.0, -1.0):
            for pattern in itertools.product((1.0, -1.0), repeat=len(S)):
                d = pinv @ np.asarray(pattern)
                a = sign * r + eps * d / np.linalg.norm(d)
                out.append(a / np.linalg.norm(a))
    return out


@dataclass
class _Candidate:
    params: tuple          # per sensor: (family index, parameter vector)
    quantizer: QuantizerVector
    divs: np.ndarray       # divergences from state m to every state


class _Search:
    def __init__(self, hs, m, scope, alphabet, family_names):
        self.hs, self.m, self.scope, self.alphabet = hs, m, scope, alphabet
        self.comps = hs.competitors(m, scope)
        if not self.comps:
            raise ValueError(f"state {m} has no competitors in scope {scope!r}")
        self.families = [_families(hs, k, family_names, alphabet) for k in range(hs.K)]
        self.cap = min(len(self.comps), hs.M - 1)
        self._row_cache = {}

    def sensor_rows(self, k, fam_idx, params):
        fam = self.families[k][fam_idx]
        qs = fam.realize(params, self.hs, k)
        rows = []
        for q in qs:
            pmf = induced_pmf(q, self.hs, k)
            rows.append(kl_columns(pmf, self.m))
        return qs, rows

    def pool(self, size, seed, seeds=()):
        """Per-sensor candidate lists ``(params, quantizer, divergence row)``."""
        per_sensor = []
        for k in range(self.hs.K):
            entries = {}
            for fi, fam in enumerate(self.families[k]):
                params = fam.initial(size, seed)
                if fam.name == "ulq":
                    params += [fam.normalize(p) for p in seeds[k]] if seeds else []
                    if self.hs.is_discrete(k) and self.alphabet == 2:
                        F = self.hs.density_matrix(k, np.arange(self.hs.densities[0][k].size))
                        params += _arrangement_directions(F)
                qs, rows = self.sensor_rows(k, fi, params)
                for p, q, row in zip(params, qs, rows):
                    entries.setdefault(q, ((fi, np.asarray(p)), q, row))
            per_sensor.append(list(entries.values()))
        return per_sensor

    def combine(self, per_sensor, limit=4096):
        if len(per_sensor) == 1:
            return [_Candidate((e[0],), QuantizerVector((e[1],)), e[2]) for e in per_sensor[0]]
        fronts = [_pareto(entries, self.comps) for entries in per_sensor]
        total = math.prod(len(f) for f in fronts)
        if total > limit:
            keep = max(2, int(limit ** (1 / len(fronts))))
            fronts = [sorted(f, key=lambda e: -np.min(e[2][self.comps]))[:keep] for f in fronts]
        out = []
        for combo in itertools.product(*fronts):
            out.append(_Candidate(tuple(e[0] for e in combo),
                                  QuantizerVector(tuple(e[1] for e in combo)),
                                  sum(e[2] for e in combo)))
        return out

    def evaluate(self, params):
        qs, rows = [], []
        for k, (fi, p) in enumerate(params):
            q, row = self.sensor_rows(k, fi, [p])
            qs.append(q[0])
            rows.append(row[0])
        return _Candidate(tuple(params), QuantizerVector(tuple(qs)), sum(rows))

    def objective(self, cands):
        V = np.stack([c.divs[self.comps] for c in cands])
        return maximin_weights(V)

    def polish(self, cands, tolerance, min_step=1e-6):
        w, best = self.objective(cands)
        trace = [best]
        rel = 1.0
        while rel >= min_step:
            improved = 0.0
            for j in range(len(cands)):
                for k, (fi, p) in enumerate(cands[j].params):
                    fam = self.families[k][fi]
                    h = rel * fam.step0
                    for i in range(len(p)):
                        for sgn in (1.0, -1.0):
                            trial_p = p.copy()
                            trial_p[i] += sgn * h
                            trial_p = fam.normalize(trial_p)
                            params = list(cands[j].params)
                            params[k] = (fi, trial_p)
                            trial = cands[:j] + [self.evaluate(params)] + cands[j + 1:]
                            tw, val = self.objective(trial)
                            if val > best + 1e-15:
                                improved += val - best
                                best, w, cands = val, tw, trial
                                p = trial_p
                                break
            trace.append(best)
            if improved < tolerance:
                rel *= 0.5
        return cands, w, best, trace


def _pareto(entries, comps):
    rows = np.stack([e[2][comps] for e in entries])
    keep = []
    for i in range(len(entries)):
        dominated = np.any(np.all(rows >= rows[i], axis=1) & np.any(rows > rows[i], axis=1))
        if not dominated:
            keep.append(i)
    seen, out = set(), []
    for i in keep:
        key = tuple(np.round(rows[i], 15))
        if key not in seen:
            seen.add(key)
            out.append(entries[i])
    return out


def check_independence(hs: HypothesisSet, k: int = 0, threshold: float = 1e10) -> tuple:
    """Condition number of the Gram matrix of the state densities at sensor
    ``k`` and whether it is below ``threshold``."""
    if hs.is_discrete(k):
        F = hs.density_matrix(k, np.arange(hs.densities[0][k].size))
        G = F.T @ F
    else:
        xs = scan_grid(hs, k)
        F = hs.density_matrix(k, xs)
        G = F.T @ F * (xs[1] - xs[0])
    cond = float(np.linalg.cond(G))
    return cond, cond <= threshold


def maximin_search(hs: HypothesisSet, m: int, pool_size: int = 512, restarts: int = 8,
                   tolerance: float = 1e-7, scope: str = "all", alphabet: int = 2,
                   families=("ulq",), seed: int = SEARCH_SEED) -> MaximinResult:
    """Maximize ``min_{m2} I(m, m2; phi)`` over randomizations of at most
    ``M - 1`` deterministic quantizers from ``families``.

    Each restart scores a scrambled quasi-random pool (restart ``r`` uses
    ``seed + r``), takes the optimal mixture over the pool and polishes it.
    The best restart wins; equal objectives are broken by the order of the
    restarts, so the output is reproducible.
    """
    search = _Search(hs, m, scope, alphabet, families)
    seeds = None
    if alphabet == 2 and "ulq" in families:
        seeds = [[] for _ in range(hs.K)]
        for m2 in search.comps:
            for k in range(hs.K):
                seeds[k].append(_mlrq_direction(hs, m, m2, k))
    attained = alphabet == 2 and all(check_independence(hs, k)[1] for k in range(hs.K))
    if not attained:
        log.info("state %d: ULQ attainment not guaranteed, result is an approximation", m)

    best = None
    for r in range(max(restarts, 1)):
        cands = search.combine(search.pool(pool_size, seed + r, seeds if r == 0 else None))
        V = np.stack([c.divs[search.comps] for c in cands])
        if np.all(V.min(axis=1) <= 0) and np.all(V.max(axis=0) <= 0):
            raise ConfigError(f"no quantizer separates state {m} from its competitors; "
                              "the hypotheses are indistinguishable")
        p, _ = maximin_weights(V)
        idx, _ = _reduce_support(V, p, search.cap)
        chosen = [cands[i] for i in idx]
        chosen, w, value, trace = search.polish(chosen, tolerance)
        log.debug("state %d restart %d: objective %.10f", m, r, value)
        if best is None or value > best[2] + 1e-13:
            best = (chosen, w, value, trace)
    chosen, w, value, trace = best
    chosen, w = _simplify(search, chosen, w, value, tolerance)
    keep = [j for j in range(len(chosen)) if w[j] > 1e-12]
    weights = np.asarray([w[j] for j in keep])
    rq = RandomizedQuantizer(tuple(chosen[j].quantizer for j in keep), tuple(weights / weights.sum()))
    rq = _merge_duplicates(rq)
    return _result(hs, m, rq, Certificate("search_optimum", trace=tuple(trace)), scope, attained)


def _simplify(search, chosen, w, value, slack=1e-10):
    """Drop components whose removal costs less than ``slack`` in the objective."""
    while len(chosen) > 1:
        trials = []
        for j in range(len(chosen)):
            rest = chosen[:j] + chosen[j + 1:]
            tw, val = search.objective(rest)
            trials.append((val, j, rest, tw))
        val, j, rest, tw = max(trials, key=lambda t: (t[0], -t[1]))
        if val < value - slack:
            break
        chosen, w = rest, tw
    return chosen, w


def _merge_duplicates(rq):
    merged = {}
    for c, w in zip(rq.components, rq.weights):
        merged[c] = merged.get(c, 0.0) + w
    total = sum(merged.values())
    return RandomizedQuantizer(tuple(merged), tuple(w / total for w in merged.values()))


def _mlrq_direction(hs, m, m2, k):
    """ULQ coefficients reproducing the pairwise quantizer of ``(m, m2)``."""
    q = pairwise_mlrq(hs, m, m2, k)
    d1, d2 = hs.densities[m][k], hs.densities[m2][k]
    if isinstance(q, IntervalQuantizer) and len(q.breakpoints) == 1:
        lam = q.breakpoints[0]
        t = float(d1.logpdf(lam) - d2.logpdf(lam))
    elif isinstance(q, CellMapQuantizer):
        p = np.asarray(d1.probs)
        r = np.asarray(d2.probs)
        inside = np.asarray(q.cells) == 1
        with np.errstate(divide="ignore"):
            lr = np.log(p) - np.log(r)
        if inside.any() and (~inside).any():
            t = 0.5 * (np.min(lr[inside]) + np.max(lr[~inside]))
        else:
            t = 0.0
        t = float(np.clip(t, -30, 30))
    else:
        t = 0.0
    return _llr_coefficients(hs.M, m, m2, t)


def solve_maximin(hs: HypothesisSet, m: int, scope: str = "all", alphabet: int = 2,
                  **search_opts) -> MaximinResult:
    """Single-pair shortcut when it applies, full search otherwise."""
    if alphabet == 2:
        res = lemma_shortcut(hs, m, scope)
        if res is not None:
            return res
    return maximin_search(hs, m, scope=scope, alphabet=alphabet, **search_opts)


def replicate_for_sensors(single: MaximinResult, K: int, hs: HypothesisSet = None) -> MaximinResult:
    """Replicate each component of a single-sensor maximin quantizer across
    ``K`` identical sensors; the information number scales by ``K``."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if single.quantizer.K != 1:
        raise ValueError("replication starts from a single-sensor result")
    if hs is not None and (hs.K != K or not hs.homogeneous()):
        raise ValueError("sensors are not identical; search quantizer vectors jointly instead")
    comps = tuple(QuantizerVector((c[0],) * K) for c in single.quantizer.components)
    rq = RandomizedQuantizer(comps, single.quantizer.weights)
    return replace(single, quantizer=rq, info_number=K * single.info_number,
                   divergences=tuple(K * v for v in single.divergences))


def maximin_all(hs: HypothesisSet, scope: str = "all", alphabet: int = 2,
                **search_opts) -> list:
    """Maximin quantizer for every state; identical sensors are solved once
    and replicated."""
    opts = tuple(sorted(search_opts.items()))
    if hs.K > 1 and hs.homogeneous():
        single = hs.with_sensors(1)
        return [replicate_for_sensors(_solve_cached(single, m, scope, alphabet, opts), hs.K, hs)
                for m in range(hs.M)]
    return [_solve_cached(hs, m, scope, alphabet, opts) for m in range(hs.M)]


@lru_cache(maxsize=64)
def _solve_cached(hs, m, scope, alphabet, opts):
    return solve_maximin(hs, m, scope, alphabet, **dict(opts))
