import sys

import numpy as np
import pytest

from gdw.graph import Graph
from gdw.labels import LabelVector


def path3(directed=False):
    return Graph.from_edges(3, [0, 1], [1, 2], directed=directed)


def random_graph(rng, n, p, directed=True):
    A = rng.random((n, n)) < p
    np.fill_diagonal(A, False)
    if not directed:
        A = np.triu(A, 1)
    src, dst = np.nonzero(A)
    return Graph.from_edges(n, src, dst, directed=directed)


def dense_adjacency(g):
    A = np.zeros((g.n, g.n))
    s, d = g.edges()
    A[s, d] = 1.0
    return A


@pytest.fixture
def chain6():
    """Blue → orange → green chain: b1,b2 → o1,o2 → g1,g2 (all four edges per layer)."""
    src = [0, 0, 1, 1, 2, 2, 3, 3]
    dst = [2, 3, 2, 3, 4, 5, 4, 5]
    g = Graph.from_edges(6, src, dst, directed=True)
    y = LabelVector(np.array([0, 0, 1, 1, 2, 2]), 3)
    return g, y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
