import numpy as np
import pytest

from seqfusion.engine import design_two_stage
from seqfusion.maximin import maximin_all
from seqfusion.models import FiniteSupport, HypothesisSet, gaussian_family
from seqfusion.quantizers import IntervalQuantizer, QuantizerVector

HT1_MEANS = (-0.5, 0.0, 1.0)
HT2_MEANS = (-0.5, 0.0, 0.5)
COST = 3.6e-3


@pytest.fixture(scope="session")
def ht1():
    return gaussian_family(HT1_MEANS, name="ht1")


@pytest.fixture(scope="session")
def ht2():
    return gaussian_family(HT2_MEANS, name="ht2")


@pytest.fixture(scope="session")
def ht1_results(ht1):
    return maximin_all(ht1)


@pytest.fixture(scope="session")
def ht2_results(ht2):
    return maximin_all(ht2)


def zero_split(K=1):
    return QuantizerVector((IntervalQuantizer.threshold(0.0),) * K)


@pytest.fixture(scope="session")
def ht1_config(ht1):
    return design_two_stage(ht1, COST, u=0.1, first_stage=zero_split())


def random_finite(rng, M=3, size=None, sensors=1):
    """Random finite-support hypothesis set with full supports."""
    size = size or int(rng.integers(2, 9))
    while True:
        rows = []
        for _ in range(M):
            p = rng.dirichlet(np.ones(size))
            p = np.maximum(p, 1e-3)
            rows.append((FiniteSupport(tuple(p / p.sum())),) * sensors)
        try:
            return HypothesisSet(tuple(rows), tuple([1.0 / M] * M))
        except ValueError:
            continue


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
