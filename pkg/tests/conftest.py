import numpy as np
import pytest

from sniffplan.model import N_CHANNELS, ConnectivityMatrix
from sniffplan.topology import TopologyConfig, generate


def symmetric_matrix(n, edges, pdr=1.0, channels=range(N_CHANNELS)):
    """Matrix with the given undirected edges at one PDR on the listed channels."""
    a = np.zeros((n, n, N_CHANNELS))
    for u, v in edges:
        for ch in channels:
            a[u, v, ch] = a[v, u, ch] = pdr
    return ConnectivityMatrix(a)


def random_matrix(seed, n, density=0.5, symmetric=False):
    rng = np.random.default_rng(seed)
    a = rng.random((n, n, N_CHANNELS)) * (rng.random((n, n, N_CHANNELS)) < density)
    if symmetric:
        a = np.triu(a.transpose(2, 0, 1), 1)
        a = (a + a.transpose(0, 2, 1)).transpose(1, 2, 0)
    for i in range(n):
        a[i, i, :] = 0.0
    return ConnectivityMatrix(a)


def brute_force_dominates(subset, covers, n):
    """Independent set-based domination check: covers is a list of python sets."""
    hit = set()
    for v in subset:
        hit |= covers[v]
    return hit == set(range(n))


@pytest.fixture(scope="session")
def topo50():
    return generate(TopologyConfig(), 7)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
