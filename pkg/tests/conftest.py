import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from netwatch.graph import DirectedGraph  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-scale Monte-Carlo tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def random_graph(rng, n, density=0.3):
    a = rng.random((n, n)) < density
    np.fill_diagonal(a, False)
    return DirectedGraph(a)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
