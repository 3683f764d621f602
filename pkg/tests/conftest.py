import numpy as np
import pytest

from fairalloc import Instance, Link, Route, generate_random


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_instance():
    """12 links / 16 routes, proportional fairness, deterministic."""
    return generate_random(seed=5, n_nodes=8, n_links=12, n_routes=16, alpha=1.0)


@pytest.fixture
def tiny_instance():
    """Two routes sharing one of two links — small enough to reason by hand."""
    return Instance(
        links=(Link(0, 2.0), Link(1, 1.5)),
        routes=(Route(0, (0,), 1.0), Route(1, (0, 1), 2.0)),
        alpha=1.0,
    )
