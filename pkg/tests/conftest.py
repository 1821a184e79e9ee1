import pytest

import numpy as np
import matplotlib as mpl
mpl.use('Agg')  # disable `plt.show()` popup window during testing

import gadguard as gg

from .utils.fuzzy_equal import FuzzyEqual


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true",
                     help="Also run the long end-to-end detection tests.")


def pytest_configure(config):
    pytest.fuzzy_equal = FuzzyEqual
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_graph(rng):
    """8 nodes, 5 attributes: a ring with two chords and one isolated node"""
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 0), (0, 3), (2, 5)]
    return gg.Graph.from_edges(edges, rng.normal(size=(8, 5)))


@pytest.fixture
def small_graph():
    """60 nodes in 3 clusters with 4 attributes"""
    return gg.synth_base_graph(60, 4, 5, 3, np.random.default_rng(7))


@pytest.fixture
def planted(small_graph):
    """`small_graph` with 2 cliques of 4 and 8 attribute anomalies"""
    return gg.inject_anomalies(small_graph, gg.InjectionConfig(
        clique_size=4, num_cliques=2, attr_candidates=10, seed=3))


@pytest.fixture
def small_config():
    return gg.DetectorConfig(embed_dim=8)
