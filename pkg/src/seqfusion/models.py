"""Hypothesis densities, priors, losses and seeded sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence, Union

import numpy as np
from scipy.stats import norm

from .errors import AssumptionViolation, ConfigError, DomainError

PROB_TOL = 1e-12
SQRT_2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class Gaussian:
    mean: float
    stddev: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.stddev)):
            raise ConfigError("gaussian parameters must be finite")
        if self.stddev <= 0:
            raise ConfigError(f"gaussian stddev must be > 0, got {self.stddev}")

    @property
    def discrete(self) -> bool:
        return False

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.stddev
        return np.exp(-0.5 * z * z) / (self.stddev * SQRT_2PI)

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.stddev
        return -0.5 * z * z - math.log(self.stddev) - 0.5 * math.log(2 * math.pi)

    def cdf(self, x):
        return norm.cdf(x, loc=self.mean, scale=self.stddev)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + self.stddev * rng.standard_normal(n)


@dataclass(frozen=True)
class FiniteSupport:
    """Probability mass on the support points ``0..len(probs)-1``."""

    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", tuple(float(v) for v in p))
        if p.ndim != 1 or p.size == 0:
            raise ConfigError("finite support probs must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ConfigError("finite support probs must be nonnegative")
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise ConfigError(f"finite support probs sum to {p.sum()!r}, not 1")

    @property
    def discrete(self) -> bool:
        return True

    @property
    def size(self) -> int:
        return len(self.probs)

    def _index(self, x) -> np.ndarray:
        arr = np.asarray(x)
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise DomainError("finite support densities take integer support indices")
            arr = arr.astype(np.int64)
        elif arr.dtype.kind not in "iu":
            raise DomainError(f"unsupported observation type {arr.dtype}")
        if np.any(arr < 0) or np.any(arr >= self.size):
            raise DomainError(f"support index outside 0..{self.size - 1}")
        return arr

    def pdf(self, x):
        p = np.asarray(self.probs)[self._index(x)]
        return float(p) if np.ndim(p) == 0 else p

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.probs))[self._index(x)]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)


DensitySpec = Union[Gaussian, FiniteSupport]


def pdf(spec: DensitySpec, x):
    """Density (or mass) of ``spec`` at ``x``."""
    return spec.pdf(x)


def sample(spec: DensitySpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. observations from ``spec``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return spec.sample(rng, n)


def density_kl(p: DensitySpec, q: DensitySpec) -> float:
    """K-L divergence D(p || q) of two raw densities; ``inf`` on support mismatch."""
    if isinstance(p, Gaussian) and isinstance(q, Gaussian):
        s1, s2 = p.stddev, q.stddev
        return math.log(s2 / s1) + (s1 * s1 + (p.mean - q.mean) ** 2) / (2 * s2 * s2) - 0.5
    if isinstance(p, FiniteSupport) and isinstance(q, FiniteSupport):
        if p.size != q.size:
            raise DomainError("finite supports of different sizes")
        total = 0.0
        for a, b in zip(p.probs, q.probs):
            if a == 0:
                continue
            if b == 0:
                return math.inf
            total += a * math.log(a / b)
        return max(total, 0.0)
    raise DomainError("densities belong to different observation families")


def _as_matrix(rows, name):
    try:
        return tuple(tuple(float(v) for v in row) for row in rows)
    except TypeError as exc:
        raise ConfigError(f"{name} must be a matrix") from exc


@dataclass(frozen=True)
class HypothesisSet:
    """M simple states observed by K conditionally independent sensors.

    ``densities[m][k]`` is the raw density of sensor ``k`` under state ``m``.
    ``loss[m][b]`` is the loss of deciding group ``b`` when the truth is ``m``;
    with the default identity grouping this is the usual M x M loss matrix.
    """

    densities: tuple
    priors: tuple
    loss: tuple = None
    groups: tuple = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        dens = tuple(tuple(row) for row in self.densities)
        object.__setattr__(self, "densities", dens)
        M = len(dens)
        if M < 2:
            raise ConfigError("need at least two states")
        K = len(dens[0])
        if K < 1 or any(len(row) != K for row in dens):
            raise ConfigError("densities must form an M x K grid")

        groups = self.groups
        if groups is None:
            groups = tuple((m,) for m in range(M))
        groups = tuple(tuple(int(m) for m in g) for g in groups)
        flat = sorted(m for g in groups for m in g)
        if flat != list(range(M)) or any(len(g) == 0 for g in groups):
            raise ConfigError("groups must partition the states 0..M-1")
        object.__setattr__(self, "groups", groups)
        B = len(groups)

        pri = np.asarray(self.priors, dtype=float)
        if pri.shape != (M,):
            raise ConfigError(f"priors must have length {M}")
        if np.any(pri <= 0):
            raise ConfigError("priors must be strictly positive")
        if abs(pri.sum() - 1.0) > PROB_TOL:
            raise ConfigError(f"priors sum to {pri.sum()!r}, not 1")
        object.__setattr__(self, "priors", tuple(float(v) for v in pri))

        loss = self.loss
        if loss is None:
            loss = [[0.0 if m in g else 1.0 for g in groups] for m in range(M)]
        loss = _as_matrix(loss, "loss")
        if len(loss) != M or any(len(row) != B for row in loss):
            raise ConfigError(f"loss must be an {M} x {B} matrix")
        for m in range(M):
            for b, g in enumerate(groups):
                w = loss[m][b]
                if w < 0 or not math.isfinite(w):
                    raise ConfigError(f"loss[{m}][{b}] must be finite and >= 0")
                if (w == 0) != (m in g):
                    raise ConfigError(
                        f"loss[{m}][{b}] must be zero exactly when state {m} is in group {b}")
        object.__setattr__(self, "loss", loss)

        for k in range(K):
            col = [dens[m][k] for m in range(M)]
            kinds = {type(d) for d in col}
            if len(kinds) != 1:
                raise ConfigError(f"sensor {k} mixes observation families")
            if isinstance(col[0], FiniteSupport) and len({d.size for d in col}) != 1:
                raise ConfigError(f"sensor {k} has finite supports of different sizes")
        self.check_assumption()

    @property
    def M(self) -> int:
        return len(self.densities)

    @property
    def K(self) -> int:
        return len(self.densities[0])

    @property
    def B(self) -> int:
        return len(self.groups)

    @property
    def prior_array(self) -> np.ndarray:
        return np.asarray(self.priors)

    @property
    def loss_array(self) -> np.ndarray:
        return np.asarray(self.loss)

    def group_of(self, m: int) -> int:
        for b, g in enumerate(self.groups):
            if m in g:
                return b
        raise IndexError(m)

    def competitors(self, m: int, scope: str = "all") -> list:
        if scope == "all":
            return [j for j in range(self.M) if j != m]
        if scope == "composite":
            own = self.groups[self.group_of(m)]
            return [j for j in range(self.M) if j not in own]
        raise ValueError(f"unknown scope {scope!r}")

    def sensor_densities(self, k: int) -> list:
        return [self.densities[m][k] for m in range(self.M)]

    def is_discrete(self, k: int) -> bool:
        return self.densities[0][k].discrete

    def density_matrix(self, k: int, x) -> np.ndarray:
        """Matrix of ``f_m^k(x)`` with one column per state."""
        x = np.asarray(x)
        dens = self.sensor_densities(k)
        if isinstance(dens[0], Gaussian):
            mu = np.array([d.mean for d in dens])
            sd = np.array([d.stddev for d in dens])
            z = (x.astype(float)[..., None] - mu) / sd
            return np.exp(-0.5 * z * z) / (sd * SQRT_2PI)
        return np.stack([d.pdf(x) for d in dens], axis=-1)

    def log_density_matrix(self, k: int, x) -> np.ndarray:
        x = np.asarray(x)
        dens = self.sensor_densities(k)
        if isinstance(dens[0], Gaussian):
            mu = np.array([d.mean for d in dens])
            sd = np.array([d.stddev for d in dens])
            z = (x.astype(float)[..., None] - mu) / sd
            return -0.5 * z * z - np.log(sd * SQRT_2PI)
        return np.stack([d.logpdf(x) for d in dens], axis=-1)

    def homogeneous(self) -> bool:
        return all(len(set(row)) == 1 for row in self.densities)

    def check_assumption(self) -> None:
        """Raise :class:`AssumptionViolation` unless every pair of states is
        separated with finite divergence at each sensor and positive
        divergence at some sensor."""
        for m, j in combinations(range(self.M), 2):
            for a, b in ((m, j), (j, m)):
                vals = [raw_kl(self, a, b, k, check=False) for k in range(self.K)]
                if any(math.isinf(v) for v in vals):
                    raise AssumptionViolation(
                        f"infinite divergence of state {b} from state {a}")
                if max(vals) <= 0:
                    raise AssumptionViolation(
                        f"states {a} and {b} are indistinguishable at every sensor")

    def with_sensors(self, K: int) -> "HypothesisSet":
        """Homogeneous copy replicating sensor 0 across ``K`` sensors."""
        if K < 1:
            raise ConfigError("sensor count must be >= 1")
        dens = tuple((row[0],) * K for row in self.densities)
        return HypothesisSet(dens, self.priors, self.loss, self.groups, name=self.name)

    def scenario_key(self) -> tuple:
        """Identity of the testing problem irrespective of sensor replication."""
        per_state = tuple(tuple(dict.fromkeys(row)) for row in self.densities)
        return (self.M, self.priors, self.loss, self.groups, per_state)


def raw_kl(hs: HypothesisSet, m: int, m2: int, k: int, check: bool = True) -> float:
    """K-L divergence of the raw density of state ``m2`` from state ``m`` at sensor ``k``.

    With ``check`` set, a zero or infinite value raises
    :class:`AssumptionViolation` carrying the offending value.
    """
    if m == m2:
        raise ValueError("raw_kl needs two different states")
    value = density_kl(hs.densities[m][k], hs.densities[m2][k])
    if check and not (0 < value < math.inf):
        raise AssumptionViolation(
            f"divergence of state {m2} from state {m} at sensor {k} is {value}", value=value)
    return value


def gaussian_family(means: Sequence[float], stddev: float = 1.0, sensors: int = 1,
                    priors=None, loss=None, groups=None, name: str = "") -> HypothesisSet:
    M = len(means)
    dens = tuple((Gaussian(float(mu), stddev),) * sensors for mu in means)
    if priors is None:
        priors = np.full(M, 1.0 / M)
    return HypothesisSet(dens, priors, loss, groups, name=name)
