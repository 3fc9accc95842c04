import numpy as np
import pytest

from hmlweight.hierarchy import Hierarchy, build_hierarchy
from hmlweight.synth import SYNTH_SPECS, synth


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def random_dag(rng: np.random.Generator, n_nodes: int, edge_prob: float = 0.3) -> Hierarchy:
    """Edges only run from lower to higher index, so the result is acyclic."""
    ids = [f"n{i}" for i in range(n_nodes)]
    edges = [(ids[i], ids[j]) for i in range(n_nodes) for j in range(i + 1, n_nodes) if rng.random() < edge_prob]
    return build_hierarchy(ids, edges)


def random_tree(rng: np.random.Generator, n_nodes: int) -> Hierarchy:
    ids = [f"n{i}" for i in range(n_nodes)]
    edges = [(ids[int(rng.integers(i))], ids[i]) for i in range(1, n_nodes) if rng.random() < 0.85]
    return build_hierarchy(ids, edges)


@pytest.fixture
def chain() -> Hierarchy:
    # a -> b -> c
    return build_hierarchy(["a", "b", "c"], [("a", "b"), ("b", "c")])


@pytest.fixture
def diamond() -> Hierarchy:
    # r -> x, r -> y, x -> z, y -> z
    return build_hierarchy(["r", "x", "y", "z"], [("r", "x"), ("r", "y"), ("x", "z"), ("y", "z")])


@pytest.fixture
def tiny_splits():
    return synth(SYNTH_SPECS["tiny"])
