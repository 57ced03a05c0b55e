"""Deterministic and randomized quantizers and their K-L divergences.

A deterministic quantizer maps one raw observation of a sensor to a message
in ``0..l-1``.  Three representations are supported:

* :class:`IntervalQuantizer` - a labelled partition of the real line,
* :class:`ULQQuantizer` - ``argmin_i sum_m A[i, m] f_m(x)`` over the state
  densities of the sensor (the binary form ``I(a . f(x) > 0)`` is a special
  case built by :meth:`ULQQuantizer.binary`),
* :class:`CellMapQuantizer` - an explicit cell for every support point of a
  finite-support sensor.

Quantizers are immutable and hashable, so induced pmfs are cached per
``(quantizer, hypothesis set, sensor)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import ConfigError, NumericalError
from .models import FiniteSupport, Gaussian, HypothesisSet
from .numerics import bisect_sign, kl_columns

SCAN_POINTS = 4096
SCAN_WIDTH = 10.0
ROOT_TOL = 1e-12


class InfiniteDivergenceWarning(RuntimeWarning):
    """A message has positive probability under one state and zero under another."""


@dataclass(frozen=True)
class IntervalQuantizer:
    """Cell ``labels[i]`` on ``[breakpoints[i-1], breakpoints[i])``.

    Adjacent intervals with equal labels are merged on construction so that
    equal partitions compare equal.
    """

    breakpoints: tuple
    labels: tuple
    alphabet_size: int = 2

    def __post_init__(self):
        bp = [float(b) for b in self.breakpoints]
        labels = [int(v) for v in self.labels]
        l = int(self.alphabet_size)
        if l < 2:
            raise ConfigError("alphabet size must be >= 2")
        if len(labels) != len(bp) + 1:
            raise ConfigError("need exactly one label more than breakpoints")
        if any(not math.isfinite(b) for b in bp):
            raise ConfigError("breakpoints must be finite")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ConfigError("breakpoints must be strictly increasing")
        if any(not 0 <= v < l for v in labels):
            raise ConfigError(f"labels must lie in 0..{l - 1}")
        keep_bp, keep_lab = [], [labels[0]]
        for b, lab in zip(bp, labels[1:]):
            if lab != keep_lab[-1]:
                keep_bp.append(b)
                keep_lab.append(lab)
        object.__setattr__(self, "breakpoints", tuple(keep_bp))
        object.__setattr__(self, "labels", tuple(keep_lab))
        object.__setattr__(self, "alphabet_size", l)

    @classmethod
    def threshold(cls, lam: float) -> "IntervalQuantizer":
        """``I(X >= lam)``."""
        return cls((lam,), (0, 1), 2)

    @classmethod
    def from_cells(cls, cells, alphabet_size=None) -> "IntervalQuantizer":
        """Build from per-cell lists of ``(lo, hi)`` intervals covering the line.

        Endpoints may be ``-inf``/``inf``.  The cells are swept in order of
        their left endpoints; gaps or overlaps are configuration errors.
        """
        pieces = []
        for label, intervals in enumerate(cells):
            for lo, hi in intervals:
                lo, hi = float(lo), float(hi)
                if not lo < hi:
                    raise ConfigError(f"empty interval ({lo}, {hi}) in cell {label}")
                pieces.append((lo, hi, label))
        pieces.sort()
        if not pieces or pieces[0][0] != -math.inf or pieces[-1][1] != math.inf:
            raise ConfigError("cells must cover the whole real line")
        for (lo1, hi1, _), (lo2, _, _) in zip(pieces, pieces[1:]):
            if hi1 < lo2:
                raise ConfigError(f"gap between {hi1} and {lo2}")
            if hi1 > lo2:
                raise ConfigError(f"overlapping cells at {lo2}")
        l = alphabet_size if alphabet_size is not None else len(cells)
        return cls(tuple(p[1] for p in pieces[:-1]), tuple(p[2] for p in pieces), l)

    def cells(self) -> list:
        edges = [-math.inf, *self.breakpoints, math.inf]
        out = [[] for _ in range(self.alphabet_size)]
        for lab, lo, hi in zip(self.labels, edges, edges[1:]):
            out[lab].append((lo, hi))
        return out

    def cell_of(self, x, hs=None, k=0):
        idx = np.searchsorted(np.asarray(self.breakpoints, dtype=float), x, side="right")
        return np.asarray(self.labels, dtype=np.int64)[idx]

    def _pmf(self, hs: HypothesisSet, k: int) -> np.ndarray:
        dens = hs.sensor_densities(k)
        q = np.zeros((self.alphabet_size, hs.M))
        if isinstance(dens[0], Gaussian):
            edges = np.array([-np.inf, *self.breakpoints, np.inf])
            for m, d in enumerate(dens):
                z = (edges - d.mean) / d.stddev
                cdf = _norm_cdf(z)
                sf = _norm_cdf(-z)
                # difference of whichever tail is smaller keeps relative accuracy
                mass = np.where(z[:-1] >= 0, sf[:-1] - sf[1:], cdf[1:] - cdf[:-1])
                np.add.at(q[:, m], np.asarray(self.labels), np.maximum(mass, 0.0))
        else:
            support = np.arange(dens[0].size)
            cell = self.cell_of(support)
            for m, d in enumerate(dens):
                np.add.at(q[:, m], cell, d.probs)
        return q / q.sum(axis=0, keepdims=True)


def _norm_cdf(z):
    from scipy.special import ndtr
    return ndtr(z)


@dataclass(frozen=True)
class ULQQuantizer:
    """``argmin_i sum_m coefficients[i][m] f_m(x)``, ties to the lower cell.

    Coefficients are scaled to unit Euclidean norm, which leaves the
    partition unchanged.
    """

    coefficients: tuple

    def __post_init__(self):
        A = np.asarray(self.coefficients, dtype=float)
        if A.ndim != 2 or A.shape[0] < 2:
            raise ConfigError("ULQ coefficients must be an l x M matrix with l >= 2")
        norm = np.linalg.norm(A)
        if not np.isfinite(norm) or norm == 0:
            raise ConfigError("ULQ coefficients must be finite and not all zero")
        A = A / norm
        object.__setattr__(self, "coefficients", tuple(tuple(float(v) for v in row) for row in A))

    @classmethod
    def binary(cls, a) -> "ULQQuantizer":
        """``I(sum_m a_m f_m(x) > 0)``."""
        a = np.asarray(a, dtype=float)
        return cls((tuple(np.zeros_like(a)), tuple(-a)))

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.coefficients)

    @property
    def alphabet_size(self) -> int:
        return len(self.coefficients)

    @property
    def binary_vector(self) -> np.ndarray:
        """``a`` such that this quantizer equals ``I(a . f > 0)`` (binary ULQs only)."""
        A = self.matrix
        if A.shape[0] != 2:
            raise ValueError("not a binary ULQ")
        return A[0] - A[1]

    def cell_of(self, x, hs: HypothesisSet, k=0):
        if not hs.is_discrete(k):
            return to_intervals(self, hs, k).cell_of(x)
        scores = hs.density_matrix(k, x) @ self.matrix.T
        return np.argmin(scores, axis=-1)

    def _pmf(self, hs: HypothesisSet, k: int) -> np.ndarray:
        if hs.is_discrete(k):
            return CellMapQuantizer(tuple(self.cell_of(np.arange(hs.densities[0][k].size), hs, k)),
                                    self.alphabet_size)._pmf(hs, k)
        return to_intervals(self, hs, k)._pmf(hs, k)


@dataclass(frozen=True)
class CellMapQuantizer:
    """Explicit cell index for every support point of a finite-support sensor."""

    cells: tuple
    alphabet_size: int = 2

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        l = int(self.alphabet_size)
        if l < 2:
            raise ConfigError("alphabet size must be >= 2")
        if any(not 0 <= c < l for c in cells):
            raise ConfigError(f"cells must lie in 0..{l - 1}")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "alphabet_size", l)

    def cell_of(self, x, hs=None, k=0):
        return np.asarray(self.cells, dtype=np.int64)[np.asarray(x, dtype=np.int64)]

    def _pmf(self, hs: HypothesisSet, k: int) -> np.ndarray:
        dens = hs.sensor_densities(k)
        if not isinstance(dens[0], FiniteSupport):
            raise ConfigError(f"cell-map quantizer applied to continuous sensor {k}")
        if dens[0].size != len(self.cells):
            raise ConfigError(f"cell map has {len(self.cells)} entries, sensor {k} has "
                              f"{dens[0].size} support points")
        q = np.zeros((self.alphabet_size, hs.M))
        for m, d in enumerate(dens):
            np.add.at(q[:, m], np.asarray(self.cells), d.probs)
        return q


DeterministicQuantizer = Union[IntervalQuantizer, ULQQuantizer, CellMapQuantizer]


@dataclass(frozen=True)
class QuantizerVector:
    """One deterministic quantizer per sensor."""

    quantizers: tuple

    def __post_init__(self):
        object.__setattr__(self, "quantizers", tuple(self.quantizers))
        if not self.quantizers:
            raise ConfigError("quantizer vector must not be empty")

    def __len__(self):
        return len(self.quantizers)

    def __getitem__(self, k):
        return self.quantizers[k]

    def __iter__(self):
        return iter(self.quantizers)

    @classmethod
    def replicate(cls, q, K: int) -> "QuantizerVector":
        return cls((q,) * K)


@dataclass(frozen=True)
class RandomizedQuantizer:
    """Finite mixture ``sum_j p^j phi^j`` of quantizer vectors."""

    components: tuple
    weights: tuple

    def __post_init__(self):
        comps = tuple(as_vector(c) for c in self.components)
        w = np.asarray(self.weights, dtype=float)
        if len(comps) < 1:
            raise ConfigError("randomized quantizer needs at least one component")
        if w.shape != (len(comps),):
            raise ConfigError("one weight per component")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"weights sum to {w.sum()!r}, not 1")
        if len({len(c) for c in comps}) != 1:
            raise ConfigError("components cover different sensor counts")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", tuple(float(v) for v in w))

    @classmethod
    def deterministic(cls, q) -> "RandomizedQuantizer":
        return cls((as_vector(q),), (1.0,))

    @property
    def K(self) -> int:
        return len(self.components[0])

    def pruned(self, tol: float = 0.0) -> "RandomizedQuantizer":
        keep = [j for j, w in enumerate(self.weights) if w > tol]
        w = np.asarray([self.weights[j] for j in keep])
        return RandomizedQuantizer(tuple(self.components[j] for j in keep), tuple(w / w.sum()))


def as_vector(q) -> QuantizerVector:
    if isinstance(q, QuantizerVector):
        return q
    if isinstance(q, (IntervalQuantizer, ULQQuantizer, CellMapQuantizer)):
        return QuantizerVector((q,))
    if isinstance(q, (tuple, list)):
        return QuantizerVector(tuple(q))
    raise TypeError(f"not a quantizer: {q!r}")


def as_randomized(q) -> RandomizedQuantizer:
    if isinstance(q, RandomizedQuantizer):
        return q
    return RandomizedQuantizer.deterministic(q)


def _check_sensors(vec: QuantizerVector, hs: HypothesisSet):
    if len(vec) != hs.K:
        raise ConfigError(f"quantizer vector has {len(vec)} entries for {hs.K} sensors")


# -- ULQ -> interval conversion ------------------------------------------------

def scan_grid(hs: HypothesisSet, k: int, points: int = SCAN_POINTS) -> np.ndarray:
    dens = hs.sensor_densities(k)
    lo = min(d.mean for d in dens) - SCAN_WIDTH * max(d.stddev for d in dens)
    hi = max(d.mean for d in dens) + SCAN_WIDTH * max(d.stddev for d in dens)
    return np.linspace(lo, hi, points)


@lru_cache(maxsize=8)
def _grid_densities(hs: HypothesisSet, k: int) -> tuple:
    xs = scan_grid(hs, k)
    return xs, hs.density_matrix(k, xs)


def ulq_partitions(stack: np.ndarray, hs: HypothesisSet, k: int) -> list:
    """Interval partitions for a stack of ULQ matrices of shape (P, l, M).

    Label switches are located on the scan grid and refined by bisection.
    Several switches inside one grid step are found by re-scanning the
    remainder of the step after each refined switch.
    """
    stack = np.asarray(stack, dtype=float)
    if hs.is_discrete(k):
        raise ValueError("interval conversion needs a continuous sensor")
    xs, F = _grid_densities(hs, k)
    scores = np.einsum("xm,plm->pxl", F, stack)
    if not np.all(np.isfinite(scores)):
        raise NumericalError("non-finite ULQ scores on the scan grid")
    labels = np.argmin(scores, axis=2)

    def label_at(p, x):
        f = hs.density_matrix(k, x)
        return np.argmin(np.einsum("rm,rlm->rl", f, stack[p]), axis=1)

    p_idx, i_idx = np.nonzero(labels[:, 1:] != labels[:, :-1])
    seg_p = p_idx
    seg_lo = xs[i_idx]
    seg_hi = xs[i_idx + 1]
    seg_left = labels[p_idx, i_idx]
    seg_right = labels[p_idx, i_idx + 1]
    found = [[] for _ in range(len(stack))]
    for _ in range(64):
        if len(seg_p) == 0:
            break
        p_cur, left_cur = seg_p, seg_left
        root = bisect_sign(lambda x: label_at(p_cur, x) == left_cur, seg_lo, seg_hi, ROOT_TOL)
        after = np.minimum(root + ROOT_TOL, seg_hi)
        lab_after = label_at(seg_p, after)
        for p, r, lab in zip(seg_p, root, lab_after):
            found[p].append((float(r), int(lab)))
        # a further switch remains in the step when the right end disagrees
        more = lab_after != seg_right
        seg_p, seg_lo, seg_hi = seg_p[more], after[more], seg_hi[more]
        seg_left, seg_right = lab_after[more], seg_right[more]
    else:
        raise NumericalError("ULQ switch points could not be resolved on the scan grid")

    out = []
    l = stack.shape[1]
    for p in range(len(stack)):
        pts = sorted(found[p])
        bps, labs = [], [int(labels[p, 0])]
        for r, lab in pts:
            if bps and r <= bps[-1]:
                if lab != labs[-1]:
                    labs[-1] = lab
                continue
            bps.append(r)
            labs.append(lab)
        out.append(IntervalQuantizer(tuple(bps), tuple(labs), l))
    return out


@lru_cache(maxsize=65536)
def to_intervals(q: ULQQuantizer, hs: HypothesisSet, k: int = 0) -> IntervalQuantizer:
    """Interval form of a ULQ on a continuous sensor."""
    return ulq_partitions(q.matrix[None], hs, k)[0]


# -- induced pmfs and divergences ------------------------------------------------

@lru_cache(maxsize=65536)
def _cached_pmf(q, hs: HypothesisSet, k: int) -> np.ndarray:
    pmf = q._pmf(hs, k)
    pmf.setflags(write=False)
    return pmf


def induced_pmf(q, hs: HypothesisSet, k: int = 0) -> np.ndarray:
    """Matrix ``q[u, m] = P_m(phi(X^k) = u)`` of message probabilities."""
    if isinstance(q, QuantizerVector):
        raise TypeError("induced_pmf takes a single deterministic quantizer")
    if not 0 <= k < hs.K:
        raise IndexError(f"sensor {k} out of range")
    return _cached_pmf(q, hs, k)


def divergence_matrix(q, hs: HypothesisSet, k: int = 0) -> np.ndarray:
    """``D[m, m2] = I(m, m2; q)`` at sensor ``k``."""
    pmf = induced_pmf(q, hs, k)
    return np.stack([kl_columns(pmf, m) for m in range(hs.M)])


def vector_divergences(vec, hs: HypothesisSet) -> np.ndarray:
    """Divergence matrix of a quantizer vector, summed over sensors."""
    vec = as_vector(vec)
    _check_sensors(vec, hs)
    return sum(divergence_matrix(q, hs, k) for k, q in enumerate(vec))


def _warn_inf(value, m, m2):
    if math.isinf(value):
        warnings.warn(f"infinite divergence of state {m2} from state {m}",
                      InfiniteDivergenceWarning, stacklevel=3)
    return value


def kl_det(q, hs: HypothesisSet, m: int, m2: int, sensor: int = None) -> float:
    """Divergence of the message law of ``m2`` from that of ``m``.

    A bare quantizer is evaluated at ``sensor`` (default 0); a
    :class:`QuantizerVector` sums over all sensors.  Unbounded divergences
    come back as ``math.inf`` with an :class:`InfiniteDivergenceWarning`.
    """
    if m == m2:
        raise ValueError("kl_det needs two different states")
    if isinstance(q, QuantizerVector):
        if sensor is not None:
            return _warn_inf(float(divergence_matrix(q[sensor], hs, sensor)[m, m2]), m, m2)
        return _warn_inf(float(vector_divergences(q, hs)[m, m2]), m, m2)
    return _warn_inf(float(divergence_matrix(q, hs, sensor or 0)[m, m2]), m, m2)


def randomized_divergences(rq, hs: HypothesisSet) -> np.ndarray:
    rq = as_randomized(rq)
    mats = np.stack([vector_divergences(c, hs) for c in rq.components])
    w = np.asarray(rq.weights)
    with np.errstate(invalid="ignore"):
        out = np.einsum("j,jab->ab", w, np.where(w[:, None, None] > 0, mats, 0.0))
    return out


def kl_randomized(rq, hs: HypothesisSet, m: int, m2: int) -> float:
    """Weight-averaged divergence of the components, as seen by a fusion
    center that knows which component produced each message."""
    if m == m2:
        raise ValueError("kl_randomized needs two different states")
    return _warn_inf(float(randomized_divergences(rq, hs)[m, m2]), m, m2)


def mixture_pmf(rq, hs: HypothesisSet) -> np.ndarray:
    """Joint message pmf of the mixture, flattened over the sensor alphabets."""
    rq = as_randomized(rq)
    total = None
    for w, comp in zip(rq.weights, rq.components):
        _check_sensors(comp, hs)
        joint = np.ones((1, hs.M))
        for k, q in enumerate(comp):
            pmf = induced_pmf(q, hs, k)
            joint = (joint[:, None, :] * pmf[None, :, :]).reshape(-1, hs.M)
        total = w * joint if total is None else total + w * joint
    return total


def kl_mixture_pmf(rq, hs: HypothesisSet, m: int, m2: int) -> float:
    """Divergence of the mixed message law, as seen by a fusion center that
    does not know which component was used."""
    if m == m2:
        raise ValueError("kl_mixture_pmf needs two different states")
    return _warn_inf(float(kl_columns(mixture_pmf(rq, hs), m)[m2]), m, m2)


def min_kl(rq, hs: HypothesisSet, m: int, scope: str = "all") -> float:
    """Smallest divergence from state ``m`` to a competitor.

    ``scope="composite"`` ignores the states sharing ``m``'s group.
    """
    comp = hs.competitors(m, scope)
    if not comp:
        raise ValueError(f"state {m} has no competitors in scope {scope!r}")
    return float(randomized_divergences(rq, hs)[m, comp].min())
