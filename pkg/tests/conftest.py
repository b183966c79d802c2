"""Shared fixtures and hypothesis strategies."""
from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from dynbn.graph import Dag

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@st.composite
def dags(draw, max_nodes: int = 10, min_nodes: int = 1):
    """Random DAG whose edges go from lower to higher declaration index."""
    n = draw(st.integers(min_nodes, max_nodes))
    ids = [f"v{i}" for i in range(n)]
    pairs = list(combinations(range(n), 2))
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges = [(ids[i], ids[j]) for (i, j), keep in zip(pairs, mask) if keep]
    return Dag(tuple((v, 1) for v in ids), tuple(edges))


@st.composite
def undirected_graphs(draw, max_nodes: int = 10):
    n = draw(st.integers(1, max_nodes))
    ids = [f"n{i}" for i in range(n)]
    adj = {v: set() for v in ids}
    for a, b in combinations(ids, 2):
        if draw(st.booleans()):
            adj[a].add(b)
            adj[b].add(a)
    return adj


def random_spd(rng: np.random.Generator, n: int, jitter: float = 0.3) -> np.ndarray:
    a = rng.normal(size=(n, n))
    return a @ a.T / n + jitter * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
