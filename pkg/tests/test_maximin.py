import itertools

import numpy as np
import pytest

from conftest import random_finite
from oracles import bernoulli_kl, enumerate_binary_maximin
from seqfusion.errors import ConfigError
from seqfusion.maximin import (check_independence, hx2_ulq_forms, lemma_shortcut, maximin_all,
                               maximin_search, maximin_weights, pairwise_mlrq,
                               replicate_for_sensors, solve_maximin)
from seqfusion.models import FiniteSupport, Gaussian, HypothesisSet, gaussian_family
from seqfusion.quantizers import IntervalQuantizer, divergence_matrix, randomized_divergences


@pytest.mark.parametrize("m, lam, info", [(0, -0.3963, 0.0796), (1, -0.1037, 0.0796),
                                          (2, 0.7941, 0.3186)])
def test_ht1_shortcut_values(ht1, m, lam, info):
    res = lemma_shortcut(ht1, m)
    assert res is not None
    assert res.quantizer.weights == (1.0,)
    assert res.thresholds[0][0] == pytest.approx(lam, abs=1e-3)
    assert res.info_number == pytest.approx(info, abs=2e-4)


def test_ht2_middle_state_needs_search(ht2, ht2_results):
    assert lemma_shortcut(ht2, 1) is None
    res = ht2_results[1]
    assert res.certificate.kind == "search_optimum"
    assert len(res.quantizer.components) <= ht2.M - 1
    assert res.info_number == pytest.approx(0.07928, abs=1e-4)
    assert res.thresholds[0][0] == pytest.approx(0.0, abs=0.01)


def test_ht2_outer_states_are_mirror_images(ht2_results):
    lo, hi = ht2_results[0], ht2_results[2]
    assert lo.info_number == pytest.approx(hi.info_number, rel=1e-9)
    assert lo.thresholds[0][0] == pytest.approx(-hi.thresholds[0][0], abs=1e-6)


def test_pairwise_mlrq_maximizes_divergence(ht1):
    q = pairwise_mlrq(ht1, 2, 1)
    best = divergence_matrix(q, ht1)[2, 1]
    for lam in np.linspace(-2, 3, 101):
        assert divergence_matrix(IntervalQuantizer.threshold(lam), ht1)[2, 1] <= best + 1e-12


def test_pairwise_mlrq_discrete_matches_brute_force():
    rng = np.random.default_rng(8)
    for _ in range(10):
        hs = random_finite(rng, M=2, size=6)
        p, q = (np.asarray(hs.densities[m][0].probs) for m in range(2))
        best = 0.0
        for bits in itertools.product((0, 1), repeat=6):
            b = np.asarray(bits, dtype=bool)
            best = max(best, bernoulli_kl(p[b].sum(), q[b].sum(), p[~b].sum(), q[~b].sum()))
        got = divergence_matrix(pairwise_mlrq(hs, 0, 1), hs)[0, 1]
        assert got == pytest.approx(best, rel=1e-12)


def test_pairwise_mlrq_unequal_variances():
    hs = HypothesisSet(((Gaussian(0.0, 1.0),), (Gaussian(0.5, 2.0),)), (0.5, 0.5))
    q = pairwise_mlrq(hs, 0, 1)
    best = divergence_matrix(q, hs)[0, 1]
    for a, b in itertools.combinations(np.linspace(-4, 4, 41), 2):
        cand = IntervalQuantizer((a, b), (0, 1, 0))
        assert divergence_matrix(cand, hs)[0, 1] <= best + 1e-9


def test_maximin_weights_two_rows_closed_form():
    V = np.array([[1.0, 0.0], [0.0, 1.0]])
    p, val = maximin_weights(V)
    assert np.allclose(p, [0.5, 0.5]) and val == pytest.approx(0.5)


def test_maximin_weights_lp_agrees_with_grid():
    rng = np.random.default_rng(2)
    for _ in range(20):
        V = rng.uniform(0, 1, (3, 3))
        p, val = maximin_weights(V)
        assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
        grid = [(a, b, 1 - a - b) for a in np.linspace(0, 1, 101) for b in np.linspace(0, 1, 101)
                if a + b <= 1 + 1e-12]
        brute = max(np.min(np.asarray(w) @ V) for w in grid)
        assert val >= brute - 1e-12
        assert val <= brute + 0.02


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_discrete_search_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    hs = random_finite(rng, size=int(rng.integers(3, 7)))
    probs = np.array([hs.densities[m][0].probs for m in range(hs.M)])
    for m in range(hs.M):
        res = maximin_search(hs, m)
        assert res.info_number == pytest.approx(enumerate_binary_maximin(probs, m), abs=1e-6)
        assert len(res.quantizer.components) <= hs.M - 1


def test_search_is_reproducible(ht1):
    a = maximin_search(ht1, 2, restarts=2, pool_size=64)
    b = maximin_search(ht1, 2, restarts=2, pool_size=64)
    assert a.quantizer == b.quantizer and a.info_number == b.info_number


def test_search_never_beats_certified_shortcut(ht1):
    res = maximin_search(ht1, 0, restarts=2, pool_size=128)
    cert = lemma_shortcut(ht1, 0)
    assert res.info_number <= cert.info_number + 1e-9
    assert res.info_number == pytest.approx(cert.info_number, abs=1e-6)


def test_replication_scales_information(ht1):
    single = solve_maximin(ht1, 2)
    double = replicate_for_sensors(single, 2, ht1.with_sensors(2))
    assert double.info_number == pytest.approx(2 * single.info_number, rel=1e-12)
    D = randomized_divergences(double.quantizer, ht1.with_sensors(2))
    assert D[2, [0, 1]].min() == pytest.approx(2 * single.info_number, rel=1e-12)
    mixed = HypothesisSet(((Gaussian(0.0), Gaussian(0.0, 2.0)), (Gaussian(1.0), Gaussian(1.0, 2.0))),
                          (0.5, 0.5))
    with pytest.raises(ValueError):
        replicate_for_sensors(solve_maximin(gaussian_family((0.0, 1.0)), 0), 2, mixed)


def test_maximin_all_homogeneous_sensors(ht2_results, ht2):
    res = maximin_all(ht2.with_sensors(2))
    for one, two in zip(ht2_results, res):
        assert two.info_number == pytest.approx(2 * one.info_number, rel=1e-12)


def test_heterogeneous_sensors_search_jointly():
    hs = HypothesisSet(((Gaussian(-0.5), Gaussian(-0.5, 2.0)), (Gaussian(0.0), Gaussian(0.0, 2.0)),
                        (Gaussian(1.0), Gaussian(1.0, 2.0))), (1 / 3,) * 3)
    res = solve_maximin(hs, 2, restarts=2, pool_size=64)
    single = solve_maximin(gaussian_family((-0.5, 0.0, 1.0)), 2)
    # the second sensor can only add information
    assert res.info_number > single.info_number


def test_composite_scope_ignores_own_group():
    hs = gaussian_family((-0.5, 0.0, 0.5), groups=[(0, 2), (1,)])
    res = solve_maximin(hs, 0, scope="composite")
    assert res.certificate.competitor == 1
    q = pairwise_mlrq(hs, 0, 1)
    assert res.info_number == pytest.approx(divergence_matrix(q, hs)[0, 1], rel=1e-12)


def test_hx2_forms():
    assert hx2_ulq_forms(lam=0.3) == IntervalQuantizer.threshold(0.3)
    assert hx2_ulq_forms(interval=(-1.0, 1.0)).labels == (0, 1, 0)
    assert hx2_ulq_forms(interval=(0.2, 0.2)).breakpoints == ()
    with pytest.raises(ValueError):
        hx2_ulq_forms(interval=(1.0, -1.0))
    with pytest.raises(ValueError):
        hx2_ulq_forms()


def test_restricted_family_confirms_deterministic_optimum(ht2, ht2_results):
    res = maximin_search(ht2, 1, families=("threshold", "interval"), restarts=2)
    assert res.info_number == pytest.approx(ht2_results[1].info_number, abs=1e-5)


def test_independence_check(ht1):
    cond, ok = check_independence(ht1)
    assert ok and cond > 1


def test_degenerate_discrete_states_rejected():
    f = FiniteSupport((0.5, 0.5))
    with pytest.raises(ConfigError):
        HypothesisSet(((f,), (f,), (FiniteSupport((0.2, 0.8)),)), (1 / 3,) * 3)
