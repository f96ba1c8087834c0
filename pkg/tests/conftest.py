import numpy as np
import pytest

from trendmax import fixtures
from trendmax.data import AnalysisConfig, AnimalDataset, AnimalRecord, GroupedTable


@pytest.fixture
def acrylamide():
    return fixtures.acrylamide()


@pytest.fixture
def glyphosate():
    return fixtures.glyphosate()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def config():
    return AnalysisConfig()


def random_table(rng, k=None, n_range=(10, 60)):
    """A control plus ``k`` dose groups with binomial counts."""
    k = k if k is not None else int(rng.integers(2, 5))
    doses = np.cumsum(rng.uniform(0.5, 3.0, size=k + 1)) - 0.5
    doses[0] = 0.0
    n = rng.integers(n_range[0], n_range[1] + 1, size=k + 1)
    p = np.clip(rng.uniform(0.02, 0.3) + rng.uniform(-0.05, 0.15, size=k + 1), 0.01, 0.9)
    y = rng.binomial(n, p)
    return GroupedTable.from_columns(doses.round(3), y, n)


def random_animals(rng, doses=(0, 10, 30, 100), n=40, t_max=104.0, slope=0.002):
    records = []
    for d in doses:
        for _ in range(n):
            t = t_max if rng.random() < 0.6 else float(rng.uniform(30, t_max))
            tumor = bool(rng.random() < 0.05 + slope * d * (t / t_max))
            records.append(AnimalRecord(float(d), tumor, round(t, 1)))
    return AnimalDataset(tuple(records))
