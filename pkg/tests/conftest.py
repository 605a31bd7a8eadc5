"""Shared fixtures: tiny nets and datasets reused across test modules."""

import numpy as np
import pytest

from marginbound.dataset import make_synthetic
from marginbound.network import init_mlp


@pytest.fixture
def tiny_net():
    """A 3-5-2 network with fixed weights."""
    return init_mlp([3, 5, 2], seed=2)


@pytest.fixture
def tiny_ds():
    """A 2-class, 3-dim synthetic sample with 8 points per class."""
    return make_synthetic(2, 3, 8, 4.0, 0.7, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
