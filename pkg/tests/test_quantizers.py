import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from conftest import random_finite
from oracles import bernoulli_kl, gaussian_ulq_pmf
from seqfusion.errors import ConfigError
from seqfusion.models import FiniteSupport, Gaussian, HypothesisSet, gaussian_family
from seqfusion.quantizers import (CellMapQuantizer, InfiniteDivergenceWarning, IntervalQuantizer,
                                  QuantizerVector, RandomizedQuantizer, ULQQuantizer,
                                  divergence_matrix, induced_pmf, kl_det, kl_mixture_pmf,
                                  kl_randomized, min_kl, mixture_pmf, randomized_divergences,
                                  scan_grid, to_intervals, vector_divergences)


def test_threshold_pmf_and_divergence(ht1):
    q = IntervalQuantizer.threshold(0.0)
    pmf = induced_pmf(q, ht1)
    assert np.allclose(pmf[1], norm.sf(0.0, loc=[-0.5, 0.0, 1.0]), rtol=1e-14)
    assert np.allclose(pmf.sum(axis=0), 1.0)
    expect = bernoulli_kl(pmf[1, 2], pmf[1, 1])
    assert kl_det(q, ht1, 2, 1) == pytest.approx(expect, rel=1e-12)


def test_interval_quantizer_merges_equal_labels():
    q = IntervalQuantizer((-1.0, 0.0, 1.0), (0, 0, 1, 1))
    assert q == IntervalQuantizer.threshold(0.0)
    assert list(q.cell_of(np.array([-2.0, 0.0, 0.5]))) == [0, 1, 1]


@pytest.mark.parametrize("bp, labels", [((1.0, 0.0), (0, 1, 0)), ((0.0,), (0, 2)),
                                        ((0.0,), (0,)), ((math.inf,), (0, 1))])
def test_interval_quantizer_validation(bp, labels):
    with pytest.raises(ConfigError):
        IntervalQuantizer(bp, labels)


def test_from_cells_round_trip_and_gaps():
    q = IntervalQuantizer((-1.0, 2.0), (0, 1, 0))
    assert IntervalQuantizer.from_cells(q.cells()) == q
    with pytest.raises(ConfigError):
        IntervalQuantizer.from_cells([[(-math.inf, 0.0)], [(0.5, math.inf)]])
    with pytest.raises(ConfigError):
        IntervalQuantizer.from_cells([[(-math.inf, 1.0)], [(0.5, math.inf)]])


def test_ulq_binary_equals_threshold_for_two_gaussians():
    # f_1 - f_0 > 0 iff x > midpoint for equal variances
    hs = gaussian_family((0.0, 2.0))
    q = ULQQuantizer.binary([-1.0, 1.0])
    iv = to_intervals(q, hs)
    assert iv.labels == (0, 1)
    assert iv.breakpoints[0] == pytest.approx(1.0, abs=1e-11)
    assert np.allclose(induced_pmf(q, hs), induced_pmf(IntervalQuantizer.threshold(1.0), hs),
                       atol=1e-11)


def test_ulq_normalization_preserves_partition(ht2):
    a = np.array([1.0, -2.0, 0.7])
    assert np.allclose(ULQQuantizer.binary(a).matrix, ULQQuantizer.binary(5 * a).matrix,
                       rtol=1e-15, atol=0)
    assert np.allclose(ULQQuantizer.binary(a).binary_vector, a / np.linalg.norm(a))


def test_ulq_interval_round_trip_on_grid():
    hs = HypothesisSet(tuple((Gaussian(m, s),) for m, s in ((-1.0, 0.7), (0.3, 1.5), (1.2, 1.0))),
                       (1 / 3,) * 3)
    rng = np.random.default_rng(3)
    for _ in range(20):
        A = rng.standard_normal((3, 3))
        q = ULQQuantizer(A)
        iv = to_intervals(q, hs)
        xs = scan_grid(hs, 0)
        direct = np.argmin(hs.density_matrix(0, xs) @ q.matrix.T, axis=1)
        far = np.min(np.abs(xs[:, None] - np.asarray(iv.breakpoints)[None, :]), axis=1) > 1e-9 \
            if iv.breakpoints else np.ones(len(xs), dtype=bool)
        assert np.array_equal(direct[far], iv.cell_of(xs)[far])


@pytest.mark.parametrize("seed", range(5))
def test_ulq_pmf_matches_quadrature_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    mus, sds = rng.uniform(-2, 2, 3), rng.uniform(0.5, 2, 3)
    hs = HypothesisSet(tuple((Gaussian(float(m), float(s)),) for m, s in zip(mus, sds)),
                       (1 / 3,) * 3)
    a = rng.standard_normal(3)
    assert np.allclose(induced_pmf(ULQQuantizer.binary(a), hs), gaussian_ulq_pmf(a, mus, sds),
                       atol=1e-9, rtol=0)


def test_discrete_ulq_and_cellmap():
    hs = HypothesisSet(((FiniteSupport((0.5, 0.3, 0.2)),), (FiniteSupport((0.1, 0.25, 0.65)),)),
                       (0.5, 0.5))
    q = ULQQuantizer.binary([-1.0, 1.0])  # cell 1 where f_1 > f_0
    assert list(q.cell_of(np.arange(3), hs)) == [0, 0, 1]
    cm = CellMapQuantizer((0, 0, 1))
    assert np.allclose(induced_pmf(q, hs), induced_pmf(cm, hs))
    assert np.allclose(induced_pmf(cm, hs)[:, 0], [0.8, 0.2])
    with pytest.raises(ConfigError):
        induced_pmf(CellMapQuantizer((0, 1)), hs)


def test_cellmap_on_continuous_sensor_rejected(ht1):
    with pytest.raises(ConfigError):
        induced_pmf(CellMapQuantizer((0, 1)), ht1)


def test_constant_quantizer_has_zero_divergence(ht1):
    const = IntervalQuantizer((), (0,), 2)
    assert np.all(divergence_matrix(const, ht1) == 0)


def test_near_singular_support_gives_large_finite_divergence():
    hs = HypothesisSet(((FiniteSupport((0.5, 0.5 - 1e-300, 1e-300)),),
                        (FiniteSupport((0.2, 0.3, 0.5)),)), (0.5, 0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("error", InfiniteDivergenceWarning)
        val = kl_det(CellMapQuantizer((0, 0, 1)), hs, 1, 0)
    assert 300 < val < math.inf


def test_kl_det_rejects_same_state(ht1):
    with pytest.raises(ValueError):
        kl_det(IntervalQuantizer.threshold(0.0), ht1, 1, 1)


def test_sensor_additivity_exact():
    hs = HypothesisSet(((Gaussian(0.0), Gaussian(0.0, 2.0)), (Gaussian(1.0), Gaussian(1.0, 2.0)),
                        (Gaussian(2.0), Gaussian(-1.0, 2.0))), (1 / 3,) * 3)
    q0, q1 = IntervalQuantizer.threshold(0.4), IntervalQuantizer((-1.0, 1.0), (0, 1, 0))
    vec = QuantizerVector((q0, q1))
    total = vector_divergences(vec, hs)
    parts = divergence_matrix(q0, hs, 0) + divergence_matrix(q1, hs, 1)
    assert np.array_equal(total, parts)
    for m in range(3):
        for m2 in range(3):
            if m != m2:
                assert kl_det(vec, hs, m, m2) == kl_det(vec, hs, m, m2, sensor=0) + \
                    kl_det(vec, hs, m, m2, sensor=1)


def test_randomized_weights_validated():
    q = IntervalQuantizer.threshold(0.0)
    with pytest.raises(ConfigError):
        RandomizedQuantizer((q, q), (0.5, 0.6))
    with pytest.raises(ConfigError):
        RandomizedQuantizer((q,), (0.5, 0.5))


def test_randomized_divergence_is_weighted_average(ht1):
    a, b = IntervalQuantizer.threshold(-0.4), IntervalQuantizer.threshold(0.8)
    rq = RandomizedQuantizer((a, b), (0.3, 0.7))
    expect = 0.3 * divergence_matrix(a, ht1) + 0.7 * divergence_matrix(b, ht1)
    assert np.allclose(randomized_divergences(rq, ht1), expect, rtol=1e-14)
    assert kl_randomized(rq, ht1, 2, 1) == pytest.approx(expect[2, 1], rel=1e-14)
    assert min_kl(rq, ht1, 2) == pytest.approx(min(expect[2, 0], expect[2, 1]), rel=1e-14)


def test_mixture_pmf_is_a_distribution(ht1):
    rq = RandomizedQuantizer((IntervalQuantizer.threshold(-0.4), IntervalQuantizer.threshold(0.8)),
                             (0.5, 0.5))
    assert np.allclose(mixture_pmf(rq, ht1).sum(axis=0), 1.0)


@st.composite
def randomized_instances(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    hs = random_finite(rng, size=draw(st.integers(2, 6)))
    J = draw(st.integers(1, 3))
    size = hs.densities[0][0].size
    comps = tuple(CellMapQuantizer(tuple(rng.integers(0, 2, size))) for _ in range(J))
    w = rng.dirichlet(np.ones(J))
    w[-1] = 1.0 - w[:-1].sum()
    return hs, RandomizedQuantizer(comps, tuple(w))


@settings(max_examples=200, deadline=None)
@given(randomized_instances())
def test_jensen_mixture_divergence_bounded_by_average(inst):
    hs, rq = inst
    for m in range(hs.M):
        for m2 in range(hs.M):
            if m != m2:
                assert kl_mixture_pmf(rq, hs, m, m2) <= kl_randomized(rq, hs, m, m2) + 1e-12


def test_induced_pmf_is_read_only(ht1):
    pmf = induced_pmf(IntervalQuantizer.threshold(0.0), ht1)
    with pytest.raises(ValueError):
        pmf[0, 0] = 1.0
