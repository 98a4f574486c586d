import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.models.connection import ChartConnection, LinearSystem, matrix  # noqa: E402
from src.models.rational import Chart  # noqa: E402
from src.models.scenarios import DirectoryStore  # noqa: E402

SCENARIOS = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'scenarios')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: end-to-end scenario runs')


@pytest.fixture(scope='session')
def store():
    return DirectoryStore(SCENARIOS)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def plane():
    """C^2 with the divisor {z1 = 0}"""
    chart = Chart(('z1', 'z2'))
    return chart.with_divisor([chart.component('z1', 1, 'z1')])


@pytest.fixture
def flat(plane):
    return ChartConnection.flat(plane)


@pytest.fixture(scope='session')
def hopf(store):
    return store.get('hopf')


@pytest.fixture(scope='session')
def heisenberg(store):
    return store.get('heisenberg')


@pytest.fixture
def scalar_connection(plane):
    """Gamma^k_1k = lambda / z1"""
    def build(value):
        lam = plane.constant(value)
        z1 = plane.var(0)
        return ChartConnection.from_entries(plane, {(0, 0, 0): lam / z1, (1, 0, 1): lam / z1})
    return build


@pytest.fixture
def residue_system(plane):
    """d + R dz1 / z1 for a constant matrix R"""
    def build(rows):
        z1 = plane.var(0)
        A1 = matrix(plane, [[plane.constant(x) / z1 for x in row] for row in rows])
        A2 = matrix(plane, [[plane.zero for _ in row] for row in rows])
        return LinearSystem(plane, len(rows), (A1, A2))
    return build
