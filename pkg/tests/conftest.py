"""Shared fixtures: small hand-built dynamic networks and a tiny simulated dataset."""

import numpy as np
import pytest

from src.business.generator import simulate
from src.models.network import DynamicNetwork, MembershipSeries, from_edges
from src.models.thergm_config import ThergmConfig, TransitionMatrix


def two_cliques(n_per: int = 5) -> np.ndarray:
    """Two disjoint cliques on nodes 0..n_per-1 and n_per..2*n_per-1."""
    n = 2 * n_per
    y = np.zeros((n, n), dtype=np.uint8)
    y[:n_per, :n_per] = 1
    y[n_per:, n_per:] = 1
    np.fill_diagonal(y, 0)
    return y


@pytest.fixture
def cliques_net():
    """Three identical slices of two 5-cliques joined by a single bridge."""
    y = two_cliques(5)
    y[4, 5] = y[5, 4] = 1
    return DynamicNetwork.from_slices([y, y, y])


@pytest.fixture
def cliques_truth():
    return MembershipSeries.constant([1] * 5 + [2] * 5, 3, 2)


@pytest.fixture
def path_net():
    """Five nodes; slice 0 is a path, slice 1 adds a chord and drops an edge."""
    y0 = from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    y1 = from_edges(5, [(0, 1), (1, 2), (0, 2), (3, 4)])
    return DynamicNetwork.from_slices([y0, y1])


@pytest.fixture(scope="session")
def small_config():
    return ThergmConfig(K=2, n_per_cluster=(8, 8), T=3, B=TransitionMatrix.sticky(2, 0.9),
                        p_between=0.02, p_within_init=0.3, seed=11)


@pytest.fixture(scope="session")
def small_simulation(small_config):
    return simulate(small_config)
