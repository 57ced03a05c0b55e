"""Acceptance checks.  Each test records one PASS/FAIL line that is printed
in the terminal summary.  Checks that cannot be met by a faithful
implementation are marked ``xfail(strict=True)`` and still report FAIL."""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, COST, random_finite, zero_split
from oracles import enumerate_binary_maximin, gaussian_ulq_pmf
from seqfusion.engine import (build_block_schedule, design_two_stage, run_centralized_reference,
                              run_two_stage, simulate_two_stage)
from seqfusion.maximin import maximin_search, replicate_for_sensors, solve_maximin
from seqfusion.models import Gaussian, HypothesisSet, gaussian_family
from seqfusion.montecarlo import (CentralizedConfig, error_rate_check, run_experiment,
                                  trial_seeds)
from seqfusion.quantizers import (CellMapQuantizer, IntervalQuantizer, QuantizerVector,
                                  RandomizedQuantizer, ULQQuantizer, divergence_matrix,
                                  induced_pmf, kl_mixture_pmf, kl_randomized, to_intervals,
                                  vector_divergences)
from seqfusion.reproduce import render, table1

HT1_THRESHOLDS = (-0.3963, -0.1037, 0.7941)
HT1_INFO = (0.0796, 0.0796, 0.3186)
HT2_THRESHOLDS = (-0.1037, 0.0, 0.3963)
HT2_INFO = (0.07959, 0.07928, 0.07959)
THRESHOLD_TOL, INFO_TOL = 0.01, 0.002
HT1_CENTRAL = (0.99601, 0.99601, 0.99467)


def record(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} | {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


def _first_threshold(res):
    return res.thresholds[0][0] if res.thresholds and res.thresholds[0] else math.nan


def test_criterion_1_maximin_ht1():
    hs = gaussian_family((-0.5, 0.0, 1.0))
    t0 = time.perf_counter()
    results = [solve_maximin(hs, m) for m in range(3)]
    elapsed = time.perf_counter() - t0
    lam = [_first_threshold(r) for r in results]
    info = [r.info_number for r in results]
    ok = (all(abs(a - b) <= THRESHOLD_TOL for a, b in zip(lam, HT1_THRESHOLDS))
          and all(abs(a - b) <= INFO_TOL for a, b in zip(info, HT1_INFO)) and elapsed < 10)
    record(1, "HT1 maximin quantizers", ok,
           f"thresholds {np.round(lam, 4).tolist()} info {np.round(info, 5).tolist()} "
           f"in {elapsed:.2f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="state-0 reference threshold is the mirror of the "
                                      "state-2 one and must be -0.3963; see the ledger")
def test_criterion_2_maximin_ht2():
    hs = gaussian_family((-0.5, 0.0, 0.5))
    results = [solve_maximin(hs, m) for m in range(3)]
    lam = [_first_threshold(r) for r in results]
    info = [r.info_number for r in results]
    restricted = maximin_search(hs, 1, families=("threshold", "interval"), restarts=2)
    gap = abs(restricted.info_number - results[1].info_number)
    lam_ok = [abs(a - b) <= THRESHOLD_TOL for a, b in zip(lam, HT2_THRESHOLDS)]
    info_ok = all(abs(a - b) <= INFO_TOL for a, b in zip(info, HT2_INFO))
    ok = all(lam_ok) and info_ok and gap <= 1e-5
    record(2, "HT2 maximin quantizers", ok,
           f"thresholds {np.round(lam, 4).tolist()} (within tol {lam_ok}) "
           f"info {np.round(info, 5).tolist()} ok={info_ok} restricted-family gap {gap:.1e}")
    # the parts that are attainable must hold regardless
    assert info_ok and gap <= 1e-5 and lam_ok[1] and lam_ok[2]
    assert ok


@pytest.mark.xfail(strict=True, reason="several two-stage reference cells lie below what the "
                                      "described test attains; see the ledger")
def test_criterion_3_table():
    t0 = time.perf_counter()
    cells, _ = table1(R=10_000, master_seed=0)
    elapsed = time.perf_counter() - t0
    print(render(cells))
    misses = [f"{c.scenario}/{c.column}/m={c.m}: {c.mean_N:.2f} vs {c.reference}"
              for c in cells if not c.contained]
    ok = not misses and elapsed < 600
    record(3, "reference table, R=1e4 per state", ok,
           f"{len(cells) - len(misses)}/{len(cells)} cells contained in {elapsed:.0f}s"
           + (f"; misses: {'; '.join(misses)}" if misses else ""))
    central = [c for c in cells if c.column == "delta_a"]
    assert all(c.contained for c in central)
    assert elapsed < 600
    assert ok


@pytest.mark.xfail(strict=True, reason="reference centralized thresholds give an overall "
                                      "error near 3e-3, not 1e-3; see the ledger")
def test_criterion_4_error_calibration(ht1):
    summary = run_experiment(CentralizedConfig(HT1_CENTRAL, COST), ht1, "centralized",
                             R=100_000, master_seed=0).summary
    rep = error_rate_check(summary, 1.0e-3)
    record(4, "centralized error calibration, HT1, R=1e5", rep.passed,
           f"{rep}; mean N {[round(s.mean_N, 2) for s in summary.states]}")
    assert rep.resolved
    assert rep.passed


def test_criterion_5_oracles():
    rng = np.random.default_rng(2024)
    worst_disc = 0.0
    for _ in range(20):
        hs = random_finite(rng, M=3, size=int(rng.integers(2, 9)))
        probs = np.array([hs.densities[m][0].probs for m in range(3)])
        for m in range(3):
            got = maximin_search(hs, m).info_number
            worst_disc = max(worst_disc, abs(got - enumerate_binary_maximin(probs, m)))
    worst_ulq = worst_oracle = 0.0
    for _ in range(100):
        mus, sds = rng.uniform(-2, 2, 3), rng.uniform(0.5, 2, 3)
        hs = HypothesisSet(tuple((Gaussian(float(a), float(s)),) for a, s in zip(mus, sds)),
                           (1 / 3,) * 3)
        q = ULQQuantizer.binary(rng.standard_normal(3))
        direct = induced_pmf(q, hs)
        worst_ulq = max(worst_ulq, float(np.abs(direct - induced_pmf(to_intervals(q, hs), hs)).max()))
        worst_oracle = max(worst_oracle, float(np.abs(
            direct - gaussian_ulq_pmf(q.binary_vector, mus, sds)).max()))
    ok = worst_disc <= 1e-6 and worst_ulq <= 1e-9 and worst_oracle <= 1e-9
    record(5, "oracle equivalence", ok,
           f"discrete maximin max gap {worst_disc:.1e} over 20x3; ULQ vs intervals "
           f"{worst_ulq:.1e}, vs quadrature {worst_oracle:.1e} over 100")
    assert ok


def test_criterion_6_asymptotic_trend(ht1, ht1_results):
    info = ht1_results[2].info_number
    ratios, errs = [], []
    for c in (1e-2, 3.6e-3, 1e-3, 1e-4):
        cfg = design_two_stage(ht1, c, first_stage=zero_split(), results=ht1_results)
        N = simulate_two_stage(cfg, ht1, 2, trial_seeds(0, "two_stage", 2, 10_000))["N"]
        scale = info / abs(math.log(c))
        ratios.append(N.mean() * scale)
        errs.append(N.std(ddof=1) / math.sqrt(len(N)) * scale)
    steps_ok = all(b - a <= 2 * math.hypot(ea, eb)
                   for a, b, ea, eb in zip(ratios, ratios[1:], errs, errs[1:]))
    drop_ok = ratios[0] - ratios[-1] > 3 * math.hypot(errs[0], errs[-1])
    ok = steps_ok and drop_ok and 0.8 < ratios[-1] < 2.0
    record(6, "first-order trend, HT1 m=2", ok,
           "E[N] I / |log c| = " + ", ".join(f"{r:.4f}+-{e:.4f}" for r, e in zip(ratios, errs)))
    assert ok


def _jensen_instances(rng, n):
    for _ in range(n):
        hs = random_finite(rng, size=int(rng.integers(2, 7)))
        J = int(rng.integers(1, 4))
        size = hs.densities[0][0].size
        comps = tuple(CellMapQuantizer(tuple(int(v) for v in rng.integers(0, 2, size)))
                      for _ in range(J))
        w = rng.dirichlet(np.ones(J))
        w[-1] = 1.0 - w[:-1].sum()
        yield hs, RandomizedQuantizer(comps, tuple(float(v) for v in w))


def test_criterion_7_properties(ht1, ht1_results, ht2_results, ht1_config):
    rng = np.random.default_rng(7)
    checks = {}

    checks["jensen"] = all(
        kl_mixture_pmf(rq, hs, m, m2) <= kl_randomized(rq, hs, m, m2) + 1e-12
        for hs, rq in _jensen_instances(rng, 1000)
        for m in range(3) for m2 in range(3) if m != m2)

    worst = 0.0
    for truth in range(3):
        for seed in trial_seeds(11, "two_stage", truth, 30):
            out = run_two_stage(ht1_config, ht1, truth, np.random.default_rng(int(seed)), trace=True)
            worst = max(worst, max(abs(sum(r["posterior"]) - 1) for r in out.trace))
        for seed in trial_seeds(11, "centralized", truth, 30):
            out = run_centralized_reference(ht1, HT1_CENTRAL, truth,
                                            np.random.default_rng(int(seed)), trace=True)
            worst = max(worst, max(abs(sum(r["posterior"]) - 1) for r in out.trace))
    checks["normalization"] = worst <= 1e-12

    hs2 = HypothesisSet(((Gaussian(0.0), Gaussian(0.0, 2.0)), (Gaussian(1.0), Gaussian(1.0, 2.0)),
                         (Gaussian(2.0), Gaussian(-1.0, 2.0))), (1 / 3,) * 3)
    q0, q1 = IntervalQuantizer.threshold(0.4), IntervalQuantizer((-1.0, 1.0), (0, 1, 0))
    checks["additivity"] = np.array_equal(
        vector_divergences(QuantizerVector((q0, q1)), hs2),
        divergence_matrix(q0, hs2, 0) + divergence_matrix(q1, hs2, 1))

    rep_ok = True
    for K in (2, 3):
        hsK = ht1.with_sensors(K)
        for res in ht1_results:
            rep = replicate_for_sensors(res, K, hsK)
            rep_ok &= math.isclose(rep.info_number, K * res.info_number, rel_tol=1e-12)
    checks["replication"] = rep_ok

    fid = 0.0
    weights = [r.quantizer.weights for r in (*ht1_results, *ht2_results)]
    weights += [(a, 1 - a) for a in rng.uniform(0, 1, 500)]
    for w in weights:
        for b in (2, 8, 64, 257):
            if b < len(w):
                continue
            s = build_block_schedule(w, b)
            freq = np.bincount(s.order, minlength=len(w)) / b
            fid = max(fid, float(np.max(np.abs(freq - np.asarray(w))) * 2 * b))
    checks["block fidelity"] = fid <= 1 + 1e-9

    a = run_experiment(ht1_config, ht1, "two_stage", R=300, master_seed=99)
    b = run_experiment(ht1_config, ht1, "two_stage", R=300, master_seed=99)
    same = a.summary == b.summary and all(np.array_equal(a.arrays[k], b.arrays[k]) for k in a.arrays)
    seeds = trial_seeds(99, "two_stage", 1, 50)
    batch = simulate_two_stage(ht1_config, ht1, 1, seeds)
    scalar = [run_two_stage(ht1_config, ht1, 1, np.random.default_rng(int(s))) for s in seeds]
    same &= all(o.N == batch["N"][i] and o.D == batch["D"][i] for i, o in enumerate(scalar))
    checks["determinism"] = bool(same)

    ok = all(checks.values())
    record(7, "property suites", ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}"
                                               for k, v in checks.items())
           + f" (max normalization error {worst:.1e}, worst fidelity {fid / 2:.2f}/b)")
    assert ok
