"""Fusion-center decision process.

The two-stage test runs a cheap stationary quantizer until the posterior of
some state exceeds ``1 - u(c)``, feeds that preliminary decision back to the
sensors, which switch to the maximin quantizer of the guessed state, and
keeps updating the same posterior until the stopping rule fires at cost
level ``c``.  Randomized second-stage quantizers are realised by a fixed
block schedule, so the fusion center always knows which deterministic
component produced each message.

Two implementations share every numerical step: the per-trial functions
(``run_*``), which can record traces, and the vectorized ``simulate_*``
functions that advance many trials in lock step.  Both read observations
from :class:`ObservationStream` objects, so equal seeds give equal trials.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import ConfigError, RunawayTrialError
from .models import Gaussian, HypothesisSet
from .quantizers import (IntervalQuantizer, QuantizerVector, RandomizedQuantizer, as_randomized,
                         as_vector, induced_pmf, min_kl, randomized_divergences,
                         vector_divergences)

STEP_CAP = 10_000_000
DEFAULT_BLOCK = 64
STREAM_BLOCK = 64
RULES = ("cost", "threshold")


# -- block design ------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSchedule:
    """Cyclic order of component indices; component ``j`` fills ``counts[j]``
    of the ``b`` slots of every block."""

    order: tuple
    counts: tuple
    weights: tuple

    @property
    def b(self) -> int:
        return len(self.order)

    def component_at(self, cursor: int) -> int:
        return self.order[cursor % len(self.order)]


def build_block_schedule(weights, b: int = DEFAULT_BLOCK) -> BlockSchedule:
    """Largest-remainder rounding of ``weights * b``, emitted round-robin in
    order of decreasing weight."""
    w = np.asarray(weights, dtype=float)
    if b < len(w):
        raise ValueError(f"block size {b} is smaller than the {len(w)} components")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a probability vector")
    raw = w * b
    counts = np.floor(raw).astype(int)
    short = b - counts.sum()
    # ties in the remainder go to the earlier component
    for j in sorted(range(len(w)), key=lambda j: (-(raw[j] - counts[j]), j))[:short]:
        counts[j] += 1
    rank = sorted(range(len(w)), key=lambda j: (-w[j], j))
    left = counts.copy()
    order = []
    while len(order) < b:
        for j in rank:
            if left[j] > 0:
                order.append(j)
                left[j] -= 1
    return BlockSchedule(tuple(order), tuple(int(c) for c in counts), tuple(float(v) for v in w))


# -- observations ------------------------------------------------------------------

class ObservationStream:
    """i.i.d. observation vectors of all sensors under one state.

    Draws come in blocks of ``block`` steps, sensor by sensor, so that a
    trial consumes its generator identically whether it is advanced one
    step at a time or a block at a time.  The engine only ever calls
    :meth:`next` / :meth:`next_block`; the true state stays in here.
    """

    def __init__(self, hs: HypothesisSet, truth: int, rng: np.random.Generator,
                 block: int = STREAM_BLOCK):
        if not 0 <= truth < hs.M:
            raise ValueError(f"truth {truth} out of range")
        self._specs = hs.densities[truth]
        self._rng = rng
        self.block = block
        self._buf = None
        self._pos = block

    def next_block(self) -> np.ndarray:
        out = np.empty((self.block, len(self._specs)))
        for k, spec in enumerate(self._specs):
            out[:, k] = spec.sample(self._rng, self.block)
        return out

    def next(self) -> np.ndarray:
        if self._pos == self.block:
            self._buf = self.next_block()
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return x


def _as_stream(hs, truth, source):
    """A generator is wrapped in a stream for ``truth``; anything else must
    already provide ``next()``."""
    if isinstance(source, np.random.Generator):
        return ObservationStream(hs, truth, source)
    return source


# -- configuration -------------------------------------------------------------------

@dataclass(frozen=True)
class TwoStageConfig:
    """Parameters of the two-stage test.

    ``second_stage[m]`` is used after a preliminary decision ``m``.  ``u``
    defaults to ``1 / |log c|``.  ``rule`` is ``"cost"`` (stop when the
    posterior expected loss of some decision is at most ``c``) or
    ``"threshold"`` (stop when some decision's posterior mass reaches
    ``1 - c``).
    """

    cost: float
    first_stage: QuantizerVector
    second_stage: tuple
    u: float = None
    rule: str = "cost"
    block: int = DEFAULT_BLOCK
    step_cap: int = STEP_CAP

    def __post_init__(self):
        object.__setattr__(self, "first_stage", as_vector(self.first_stage))
        object.__setattr__(self, "second_stage", tuple(as_randomized(q) for q in self.second_stage))
        if not self.cost > 0:
            raise ConfigError("cost per step must be > 0")
        if self.rule not in RULES:
            raise ConfigError(f"unknown stopping rule {self.rule!r}")
        if not 0 < self.first_threshold < 0.5:
            raise ConfigError(f"u(c) = {self.first_threshold} must lie in (0, 1/2)")
        if self.block < 1 or self.step_cap < 1:
            raise ConfigError("block and step cap must be positive")

    @property
    def first_threshold(self) -> float:
        if self.u is not None:
            return float(self.u)
        return 1.0 / abs(math.log(self.cost))

    def validate(self, hs: HypothesisSet) -> None:
        """Check the configuration against the hypotheses it will test."""
        if len(self.second_stage) != hs.M:
            raise ConfigError(f"need one second-stage quantizer per state ({hs.M})")
        if len(self.first_stage) != hs.K:
            raise ConfigError("first-stage quantizer vector does not match the sensor count")
        D = vector_divergences(self.first_stage, hs)
        off = ~np.eye(hs.M, dtype=bool)
        if not np.all(D[off] > 0):
            raise ConfigError("first-stage quantizer leaves a pair of states with zero divergence")
        scope = "all" if all(len(g) == 1 for g in hs.groups) else "composite"
        for m, rq in enumerate(self.second_stage):
            if rq.K != hs.K:
                raise ConfigError(f"second-stage quantizer {m} does not match the sensor count")
            if len(rq.components) > self.block:
                raise ConfigError(f"block size {self.block} below component count of quantizer {m}")
            for m2 in range(hs.M):
                if hs.competitors(m2, scope) and not min_kl(rq, hs, m2, scope) > 0:
                    raise ConfigError(f"second-stage quantizer {m} does not separate state {m2}")


def default_first_stage(hs: HypothesisSet) -> QuantizerVector:
    """Median split at the midrange of the state means for Gaussian sensors;
    for finite supports the pairwise likelihood-ratio quantizer with the
    largest smallest pairwise divergence."""
    from .maximin import pairwise_mlrq

    qs = []
    for k in range(hs.K):
        dens = hs.sensor_densities(k)
        if isinstance(dens[0], Gaussian):
            mus = [d.mean for d in dens]
            qs.append(IntervalQuantizer.threshold(0.5 * (min(mus) + max(mus))))
            continue
        best, score = None, -1.0
        for m in range(hs.M):
            for m2 in range(hs.M):
                if m == m2:
                    continue
                q = pairwise_mlrq(hs, m, m2, k)
                single = HypothesisSet(tuple((row[k],) for row in hs.densities), hs.priors)
                D = vector_divergences(QuantizerVector((q,)), single)
                s = D[~np.eye(hs.M, dtype=bool)].min()
                if s > score:
                    best, score = q, s
        qs.append(best)
    return QuantizerVector(tuple(qs))


def design_two_stage(hs: HypothesisSet, cost: float, u: float = None, rule: str = "cost",
                     first_stage=None, block: int = DEFAULT_BLOCK, alphabet: int = 2,
                     results=None, **search_opts) -> TwoStageConfig:
    """Two-stage configuration with maximin second-stage quantizers."""
    from .maximin import maximin_all

    if results is None:
        scope = "all" if all(len(g) == 1 for g in hs.groups) else "composite"
        results = maximin_all(hs, scope=scope, alphabet=alphabet, **search_opts)
    cfg = TwoStageConfig(cost=cost, first_stage=first_stage or default_first_stage(hs),
                         second_stage=tuple(r.quantizer for r in results), u=u, rule=rule,
                         block=block)
    cfg.validate(hs)
    return cfg


# -- posterior bookkeeping ----------------------------------------------------------

def normalize_log(lp: np.ndarray) -> np.ndarray:
    mx = np.max(lp, axis=-1, keepdims=True)
    return lp - (mx + np.log(np.sum(np.exp(lp - mx), axis=-1, keepdims=True)))


@dataclass(frozen=True)
class FusionState:
    log_posterior: np.ndarray
    stage: str = "first"
    preliminary: int = None
    n: int = 0
    cursor: int = 0

    @classmethod
    def initial(cls, hs: HypothesisSet) -> "FusionState":
        return cls(np.log(hs.prior_array))

    @property
    def posterior(self) -> np.ndarray:
        return np.exp(self.log_posterior)


def message_loglik(vec: QuantizerVector, u, hs: HypothesisSet) -> np.ndarray:
    """``log f_m(u; phi)`` for every state, summed over sensors."""
    out = np.zeros(hs.M)
    with np.errstate(divide="ignore"):
        for k, (q, uk) in enumerate(zip(vec, u)):
            out = out + np.log(induced_pmf(q, hs, k)[int(uk)])
    return out


def _apply(log_post, ll, what):
    lp = log_post + ll
    if not np.any(np.isfinite(lp)):
        raise ValueError(f"{what} has probability zero under every state")
    return normalize_log(lp)


def posterior_update(state: FusionState, u, active, hs: HypothesisSet) -> FusionState:
    """Bayes update with the message tuple ``u`` produced by the deterministic
    quantizer vector ``active``."""
    vec = as_vector(active)
    if len(u) != len(vec):
        raise ValueError("one message per sensor")
    lp = _apply(state.log_posterior, message_loglik(vec, u, hs), f"message {tuple(u)} of {vec}")
    return replace(state, log_posterior=lp, n=state.n + 1)


def decision(post: np.ndarray, hs: HypothesisSet, level: float, rule: str):
    """Decision group (or ``-1``) per row of ``post`` for a stopping rule at ``level``."""
    post = np.atleast_2d(post)
    if rule == "cost":
        risk = post @ hs.loss_array
        best = np.argmin(risk, axis=1)
        ok = risk[np.arange(len(post)), best] <= level
    else:
        member = np.zeros((hs.M, hs.B))
        for b, g in enumerate(hs.groups):
            member[list(g), b] = 1.0
        mass = post @ member
        best = np.argmax(mass, axis=1)
        ok = mass[np.arange(len(post)), best] >= 1 - level
    return np.where(ok, best, -1)


# -- compiled tables -------------------------------------------------------------------

class _Tables:
    """Log message likelihoods and schedules for every deterministic
    quantizer vector a configuration can activate (id 0 is the first stage)."""

    def __init__(self, cfg: TwoStageConfig, hs: HypothesisSet):
        cfg.validate(hs)
        self.vectors = [cfg.first_stage]
        self.schedules = []
        sched_ids = np.zeros((hs.M, cfg.block), dtype=np.int64)
        for m, rq in enumerate(cfg.second_stage):
            sched = build_block_schedule(rq.weights, cfg.block)
            self.schedules.append(sched)
            ids = []
            for comp in rq.components:
                ids.append(len(self.vectors))
                self.vectors.append(comp)
            sched_ids[m] = [ids[j] for j in sched.order]
        self.sched_ids = sched_ids
        with np.errstate(divide="ignore"):
            self.logpmf = [[np.log(induced_pmf(q, hs, k)) for k, q in enumerate(vec)]
                           for vec in self.vectors]
        self.hs = hs

    def loglik(self, qid: int, x: np.ndarray) -> np.ndarray:
        """Summed log likelihoods for observation rows ``x`` (n x K)."""
        vec = self.vectors[qid]
        out = np.zeros((len(x), self.hs.M))
        for k, q in enumerate(vec):
            cells = q.cell_of(x[:, k], self.hs, k)
            out = out + self.logpmf[qid][k][cells]
        return out

    def messages(self, qid: int, x: np.ndarray) -> tuple:
        return tuple(int(q.cell_of(x[k:k + 1], self.hs, k)[0]) for k, q in enumerate(self.vectors[qid]))


@lru_cache(maxsize=32)
def _tables(cfg: TwoStageConfig, hs: HypothesisSet) -> _Tables:
    return _Tables(cfg, hs)


# -- per-trial engine ---------------------------------------------------------------------

@dataclass
class TrialOutcome:
    N0: int
    D0: int
    N: int
    D: int
    trace: list = field(default=None, repr=False)


def _record(trace, n, stage, component, msg, lp):
    if trace is not None:
        trace.append({"n": n, "stage": stage, "component": component,
                      "message": list(msg), "posterior": np.exp(lp).tolist()})


def run_first_stage(cfg: TwoStageConfig, hs: HypothesisSet, stream, trace=None):
    """Stationary first-stage quantizer until ``max posterior >= 1 - u``.

    Returns the state at ``N0`` (with ``preliminary`` set) and ``D0``.
    """
    tab = _tables(cfg, hs)
    level = 1 - cfg.first_threshold
    lp = np.log(hs.prior_array)
    n = 0
    while np.exp(lp).max() < level:
        if n >= cfg.step_cap:
            raise RunawayTrialError(f"first stage exceeded {cfg.step_cap} steps", n, np.exp(lp))
        x = stream.next()
        ll = tab.loglik(0, x[None])[0]
        lp = _apply(lp, ll, "first-stage message")
        n += 1
        _record(trace, n, 1, 0, tab.messages(0, x) if trace is not None else (), lp)
    d0 = int(np.argmax(lp))
    return FusionState(lp, "second", d0, n, 0), d0


def run_second_stage(cfg: TwoStageConfig, hs: HypothesisSet, state: FusionState, stream,
                     trace=None):
    """Continue the posterior with the second-stage quantizer of the
    preliminary decision until the stopping rule fires.

    Returns ``(N, D, state)``.
    """
    if state.stage != "second" or state.preliminary is None:
        raise ValueError("second stage needs a completed first stage")
    tab = _tables(cfg, hs)
    d0 = state.preliminary
    ids = tab.sched_ids[d0]
    lp, n, cursor = state.log_posterior, state.n, state.cursor
    while True:
        d = int(decision(np.exp(lp), hs, cfg.cost, cfg.rule)[0])
        if d >= 0:
            return n, d, FusionState(lp, "done", d0, n, cursor)
        if n >= cfg.step_cap:
            raise RunawayTrialError(f"second stage exceeded {cfg.step_cap} steps", n, np.exp(lp))
        qid = int(ids[cursor % len(ids)])
        x = stream.next()
        lp = _apply(lp, tab.loglik(qid, x[None])[0], "second-stage message")
        n += 1
        cursor += 1
        if trace is not None:
            comp = tab.schedules[d0].component_at(cursor - 1)
            _record(trace, n, 2, comp, tab.messages(qid, x), lp)


def run_two_stage(cfg: TwoStageConfig, hs: HypothesisSet, truth: int, rng,
                  trace: bool = False) -> TrialOutcome:
    stream = _as_stream(hs, truth, rng)
    steps = [] if trace else None
    state, d0 = run_first_stage(cfg, hs, stream, steps)
    n, d, _ = run_second_stage(cfg, hs, state, stream, steps)
    return TrialOutcome(state.n, d0, n, d, steps)


def run_composite(cfg: TwoStageConfig, hs: HypothesisSet, truth: int, rng,
                  trace: bool = False) -> TrialOutcome:
    """Two-stage test deciding among groups of states by posterior expected loss."""
    if cfg.rule != "cost":
        raise ConfigError("composite testing uses the posterior cost rule")
    return run_two_stage(cfg, hs, truth, rng, trace)


def run_centralized_reference(hs: HypothesisSet, thresholds, truth: int, rng,
                              step_cap: int = STEP_CAP, trace: bool = False) -> TrialOutcome:
    """Bayes recursion on raw observations; stop once ``pi_m >= A_m`` for some ``m``."""
    A = _check_thresholds(hs, thresholds)
    stream = _as_stream(hs, truth, rng)
    lp = np.log(hs.prior_array)
    steps = [] if trace else None
    n = 0
    while True:
        if n >= step_cap:
            raise RunawayTrialError(f"centralized test exceeded {step_cap} steps", n, np.exp(lp))
        x = stream.next()
        lp = _apply(lp, raw_loglik(hs, x[None])[0], "observation")
        n += 1
        if steps is not None:
            steps.append({"n": n, "observation": x.tolist(), "posterior": np.exp(lp).tolist()})
        hit = np.flatnonzero(np.exp(lp) >= A)
        if hit.size:
            return TrialOutcome(0, -1, n, int(hit[0]), steps)


def _check_thresholds(hs, thresholds):
    A = np.asarray(thresholds, dtype=float)
    if A.shape != (hs.M,):
        raise ConfigError(f"need {hs.M} thresholds")
    if np.any(A <= 0.5) or np.any(A >= 1):
        raise ConfigError("thresholds must lie in (1/2, 1)")
    return A


def raw_loglik(hs: HypothesisSet, x: np.ndarray) -> np.ndarray:
    out = np.zeros((len(x), hs.M))
    for k in range(hs.K):
        out = out + hs.log_density_matrix(k, x[:, k])
    return out


# -- vectorized engine ------------------------------------------------------------------

class _Buffers:
    def __init__(self, streams):
        self.streams = streams
        self.data = np.stack([s.next_block() for s in streams])
        self.pos = np.zeros(len(streams), dtype=np.int64)

    def take(self, idx):
        x = self.data[idx, self.pos[idx]]
        self.pos[idx] += 1
        for r in idx[self.pos[idx] == self.data.shape[1]]:
            self.data[r] = self.streams[r].next_block()
            self.pos[r] = 0
        return x


def _make_streams(hs, truth, seeds):
    return [ObservationStream(hs, truth, np.random.default_rng(int(s))) for s in seeds]


def simulate_two_stage(cfg: TwoStageConfig, hs: HypothesisSet, truth: int, seeds) -> dict:
    """Run one trial per seed in lock step; returns arrays ``N0, D0, N, D``.

    Trial ``r`` is identical to ``run_two_stage(cfg, hs, truth,
    default_rng(seeds[r]))``.
    """
    tab = _tables(cfg, hs)
    R = len(seeds)
    buf = _Buffers(_make_streams(hs, truth, seeds))
    lp = np.tile(np.log(hs.prior_array), (R, 1))
    n = np.zeros(R, dtype=np.int64)
    stage = np.zeros(R, dtype=np.int8)
    cursor = np.zeros(R, dtype=np.int64)
    out = {key: np.full(R, -1, dtype=np.int64) for key in ("N0", "D0", "N", "D")}
    level1 = 1 - cfg.first_threshold

    def enter_second(idx):
        stage[idx] = 1
        out["N0"][idx] = n[idx]
        out["D0"][idx] = np.argmax(lp[idx], axis=1)
        check_stop(idx)

    def check_stop(idx):
        d = decision(np.exp(lp[idx]), hs, cfg.cost, cfg.rule)
        hit = idx[d >= 0]
        stage[hit] = 2
        out["N"][hit] = n[hit]
        out["D"][hit] = d[d >= 0]

    all_idx = np.arange(R)
    enter_second(all_idx[np.exp(lp).max(axis=1) >= level1])
    while True:
        idx = np.flatnonzero(stage < 2)
        if idx.size == 0:
            break
        if n[idx].max() >= cfg.step_cap:
            r = idx[np.argmax(n[idx])]
            raise RunawayTrialError(f"trial exceeded {cfg.step_cap} steps", int(n[r]),
                                    np.exp(lp[r]), seed=int(seeds[r]))
        x = buf.take(idx)
        st = stage[idx]
        qid = np.zeros(len(idx), dtype=np.int64)
        sec = st == 1
        qid[sec] = tab.sched_ids[out["D0"][idx[sec]], cursor[idx[sec]] % cfg.block]
        ll = np.empty((len(idx), hs.M))
        for q in np.unique(qid):
            sel = qid == q
            ll[sel] = tab.loglik(int(q), x[sel])
        new = lp[idx] + ll
        if not np.all(np.any(np.isfinite(new), axis=1)):
            raise ValueError("message has probability zero under every state")
        lp[idx] = normalize_log(new)
        n[idx] += 1
        cursor[idx[sec]] += 1
        if sec.any():
            check_stop(idx[sec])
        first = idx[~sec]
        if first.size:
            enter_second(first[np.exp(lp[first]).max(axis=1) >= level1])
    return out


def simulate_centralized(hs: HypothesisSet, thresholds, truth: int, seeds,
                         step_cap: int = STEP_CAP) -> dict:
    """Vectorized :func:`run_centralized_reference`; returns arrays ``N, D``."""
    A = _check_thresholds(hs, thresholds)
    R = len(seeds)
    buf = _Buffers(_make_streams(hs, truth, seeds))
    lp = np.tile(np.log(hs.prior_array), (R, 1))
    n = np.zeros(R, dtype=np.int64)
    N = np.full(R, -1, dtype=np.int64)
    D = np.full(R, -1, dtype=np.int64)
    active = np.arange(R)
    while active.size:
        if n[active].max() >= step_cap:
            r = active[np.argmax(n[active])]
            raise RunawayTrialError(f"trial exceeded {step_cap} steps", int(n[r]),
                                    np.exp(lp[r]), seed=int(seeds[r]))
        x = buf.take(active)
        lp[active] = normalize_log(lp[active] + raw_loglik(hs, x))
        n[active] += 1
        post = np.exp(lp[active])
        over = post >= A
        hit = over.any(axis=1)
        done = active[hit]
        N[done] = n[done]
        D[done] = np.argmax(over[hit], axis=1)
        active = active[~hit]
    return {"N0": np.zeros(R, dtype=np.int64), "D0": np.full(R, -1, dtype=np.int64), "N": N, "D": D}
