"""Trial orchestration: expected sample sizes, error rates and Bayes risk."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .engine import STEP_CAP, TwoStageConfig, simulate_centralized, simulate_two_stage
from .errors import ConfigError, RunawayTrialError, TrialError
from .models import HypothesisSet

VARIANTS = ("two_stage", "centralized", "composite")
_VARIANT_CODE = {"two_stage": 1, "centralized": 2, "composite": 3}
CSV_FIELDS = ("variant", "m", "R", "mean_N", "stderr_N", "mean_N0", "err_rate", "err_stderr",
              "bayes_risk")
MIN_TRIALS = 100

_MASK = (1 << 64) - 1


def _splitmix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def trial_seeds(master_seed: int, variant: str, truth: int, R: int, start: int = 0) -> np.ndarray:
    """Per-trial seeds.

    Chained splitmix64: ``s = mix(mix(mix(master) ^ variant_code) ^ truth)``,
    then trial ``i`` gets ``mix(s ^ i)``.  Any trial can be replayed from
    ``(master_seed, variant, truth, i)`` alone.
    """
    z = _splitmix64(np.array([int(master_seed) & _MASK], dtype=np.uint64))
    z = _splitmix64(z ^ np.uint64(_VARIANT_CODE[variant]))
    z = _splitmix64(z ^ np.uint64(truth))
    return _splitmix64(z ^ np.arange(start, start + R, dtype=np.uint64))


@dataclass(frozen=True)
class CentralizedConfig:
    """Reference test on raw data; ``cost`` only enters the Bayes-risk bookkeeping."""

    thresholds: tuple
    cost: float
    step_cap: int = STEP_CAP

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(a) for a in self.thresholds))
        if not self.cost > 0:
            raise ConfigError("cost per step must be > 0")


@dataclass(frozen=True)
class TrialRecord:
    truth: int
    N0: int
    N: int
    D0: int
    D: int
    seed: int


@dataclass(frozen=True)
class StateSummary:
    m: int
    R: int
    mean_N: float
    stderr_N: float
    mean_N0: float
    err_rate: float
    err_stderr: float


@dataclass(frozen=True)
class SimSummary:
    variant: str
    cost: float
    states: tuple
    bayes_risk: float
    bayes_risk_stderr: float
    scenario: tuple = field(repr=False)
    priors: tuple = field(repr=False)
    label: str = ""

    @property
    def mean_N(self) -> tuple:
        return tuple(s.mean_N for s in self.states)

    @property
    def stderr_N(self) -> tuple:
        return tuple(s.stderr_N for s in self.states)

    def overall_error(self) -> tuple:
        """Prior-weighted error probability and its standard error."""
        p = np.asarray(self.priors)
        rate = np.array([s.err_rate for s in self.states])
        se = np.array([s.err_stderr for s in self.states])
        return float(p @ rate), float(math.sqrt(np.sum((p * se) ** 2)))

    def rows(self) -> list:
        return [{"variant": self.label or self.variant, "m": s.m, "R": s.R, "mean_N": s.mean_N,
                 "stderr_N": s.stderr_N, "mean_N0": s.mean_N0, "err_rate": s.err_rate,
                 "err_stderr": s.err_stderr, "bayes_risk": self.bayes_risk} for s in self.states]


@dataclass
class ExperimentResult:
    summary: SimSummary
    arrays: dict = field(repr=False)

    def records(self) -> list:
        a = self.arrays
        return [TrialRecord(int(t), int(n0), int(n), int(d0), int(d), int(s))
                for t, n0, n, d0, d, s in zip(a["truth"], a["N0"], a["N"], a["D0"], a["D"], a["seed"])]


def summarize(records, hs: HypothesisSet, cost: float, variant: str = "two_stage",
              label: str = "") -> SimSummary:
    """Fold trial records (a list of :class:`TrialRecord` or a dict of arrays)
    into per-state statistics and the Bayes risk.

    Records are put into a canonical order first, so the result does not
    depend on the order in which trials finished.
    """
    if isinstance(records, dict):
        a = {k: np.asarray(records[k]) for k in ("truth", "N0", "N", "D0", "D")}
    else:
        a = {k: np.array([getattr(r, k) for r in records]) for k in ("truth", "N0", "N", "D0", "D")}
    order = np.lexsort((a["D0"], a["N0"], a["D"], a["N"], a["truth"]))
    a = {k: v[order] for k, v in a.items()}
    W = hs.loss_array
    states, risk, var = [], 0.0, 0.0
    for m in range(hs.M):
        sel = a["truth"] == m
        R = int(sel.sum())
        if R == 0:
            raise ValueError(f"no trials under state {m}")
        N = a["N"][sel].astype(float)
        D = a["D"][sel]
        wrong = (D != hs.group_of(m)).astype(float)
        err = wrong.mean()
        sd = N.std(ddof=1) if R > 1 else 0.0
        states.append(StateSummary(m, R, float(N.mean()), float(sd / math.sqrt(R)),
                                   float(a["N0"][sel].mean()), float(err),
                                   float(math.sqrt(err * (1 - err) / R))))
        loss = cost * N + W[m, D]
        risk += hs.priors[m] * loss.mean()
        if R > 1:
            var += hs.priors[m] ** 2 * loss.var(ddof=1) / R
    return SimSummary(variant, float(cost), tuple(states), float(risk), float(math.sqrt(var)),
                      hs.scenario_key(), hs.priors, label)


def _simulate(args):
    cfg, hs, variant, truth, seeds = args
    if variant == "centralized":
        return simulate_centralized(hs, cfg.thresholds, truth, seeds, cfg.step_cap)
    return simulate_two_stage(cfg, hs, truth, seeds)


def run_experiment(cfg, hs: HypothesisSet, variant: str = "two_stage", R: int = 10_000,
                   master_seed: int = 0, threads: int = 1, label: str = "") -> ExperimentResult:
    """``R`` independent trials under every state.

    ``cfg`` is a :class:`TwoStageConfig` for the two-stage and composite
    variants and a :class:`CentralizedConfig` for the reference test.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    if R < MIN_TRIALS:
        raise ConfigError(f"need at least {MIN_TRIALS} trials per state")
    want = CentralizedConfig if variant == "centralized" else TwoStageConfig
    if not isinstance(cfg, want):
        raise ConfigError(f"variant {variant!r} needs a {want.__name__}")
    if variant == "composite":
        if cfg.rule != "cost":
            raise ConfigError("composite testing uses the posterior cost rule")
        if all(len(g) == 1 for g in hs.groups):
            raise ConfigError("composite variant needs a grouping of the states")
    if variant != "centralized":
        cfg.validate(hs)

    threads = max(1, int(threads))
    chunk = max(1, math.ceil(R / threads))
    jobs, meta = [], []
    for m in range(hs.M):
        seeds = trial_seeds(master_seed, variant, m, R)
        for lo in range(0, R, chunk):
            jobs.append((cfg, hs, variant, m, seeds[lo:lo + chunk]))
            meta.append((m, seeds[lo:lo + chunk]))
    try:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(_simulate, jobs))
        else:
            outs = [_simulate(job) for job in jobs]
    except RunawayTrialError:
        raise
    except (ValueError, FloatingPointError) as exc:
        raise TrialError(f"trial failed: {exc}", seed=None, truth=None) from exc

    arrays = {k: np.concatenate([o[k] for o in outs]) for k in ("N0", "D0", "N", "D")}
    arrays["truth"] = np.concatenate([np.full(len(s), m) for m, s in meta])
    arrays["seed"] = np.concatenate([s for _, s in meta])
    summary = summarize(arrays, hs, cfg.cost, variant, label)
    return ExperimentResult(summary, arrays)


# -- comparisons ----------------------------------------------------------------------

@dataclass(frozen=True)
class Comparison:
    labels: tuple
    rows: tuple

    def render(self) -> str:
        head = ["m"] + [f"{lab} E[N]" for lab in self.labels] + [f"{lab} err" for lab in self.labels]
        lines = ["  ".join(f"{h:>18}" for h in head)]
        for row in self.rows:
            cells = [f"{row['m']:>18d}"]
            for lab in self.labels:
                mark = "*" if row["separated"].get(lab) else " "
                cells.append(f"{row['mean_N'][lab]:>11.2f}±{row['stderr_N'][lab]:<5.2f}{mark}")
            cells += [f"{row['err_rate'][lab]:>18.2e}" for lab in self.labels]
            lines.append("  ".join(cells))
        lines.append("* 3-sigma interval does not overlap the first column")
        return "\n".join(lines)


def compare(summaries) -> Comparison:
    """Side-by-side E[N] and error rates; the first summary is the reference."""
    summaries = list(summaries)
    if not summaries:
        raise ValueError("nothing to compare")
    key = summaries[0].scenario
    if any(s.scenario != key for s in summaries):
        raise ValueError("summaries come from different hypothesis sets")
    labels = []
    for i, s in enumerate(summaries):
        lab = s.label or s.variant
        labels.append(lab if lab not in labels else f"{lab}#{i}")
    ref = summaries[0]
    rows = []
    for m in range(len(ref.states)):
        r0 = ref.states[m]
        row = {"m": m, "mean_N": {}, "stderr_N": {}, "err_rate": {}, "delta": {}, "separated": {}}
        for lab, s in zip(labels, summaries):
            st = s.states[m]
            row["mean_N"][lab] = st.mean_N
            row["stderr_N"][lab] = st.stderr_N
            row["err_rate"][lab] = st.err_rate
            row["delta"][lab] = st.mean_N - r0.mean_N
            row["separated"][lab] = abs(st.mean_N - r0.mean_N) > 3 * (st.stderr_N + r0.stderr_N)
        rows.append(row)
    return Comparison(tuple(labels), tuple(rows))


@dataclass(frozen=True)
class ErrorReport:
    overall: float
    stderr: float
    target: float
    slack: float
    passed: bool
    resolved: bool

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        note = "" if self.resolved else " (insufficient resolution: stderr >= target)"
        return (f"{verdict}: overall error {self.overall:.3e} vs target {self.target:.3e}"
                f" +- {self.slack:.2e}{note}")


def error_rate_check(summary: SimSummary, target: float, slack: float = None,
                     sigmas: float = 3.0) -> ErrorReport:
    """Prior-weighted error probability against ``target``.

    The default slack is ``sigmas`` binomial standard errors evaluated at
    the target rate.  A target of 1 or more cannot be exceeded and passes.
    """
    overall, _ = summary.overall_error()
    if target >= 1:
        return ErrorReport(overall, 0.0, target, 0.0, True, True)
    if target <= 0:
        raise ValueError("target must be positive")
    p = np.asarray(summary.priors)
    R = np.array([s.R for s in summary.states])
    se = float(math.sqrt(np.sum(p ** 2 * target * (1 - target) / R)))
    if slack is None:
        slack = sigmas * se
    return ErrorReport(overall, se, target, float(slack), abs(overall - target) <= slack,
                       se < target)


# -- persistence ----------------------------------------------------------------------

def write_summary(summaries, path, config: dict = None, master_seed: int = None) -> Path:
    """CSV (one row per variant and state) plus a JSON sidecar next to it."""
    if isinstance(summaries, SimSummary):
        summaries = [summaries]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for s in summaries:
            for row in s.rows():
                writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    side = {"version": __version__, "master_seed": master_seed, "config": config,
            "summaries": [{"variant": s.variant, "label": s.label, "cost": s.cost,
                           "bayes_risk": s.bayes_risk, "bayes_risk_stderr": s.bayes_risk_stderr,
                           "states": [asdict(st) for st in s.states]} for s in summaries]}
    path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True))
    return path
