import dataclasses
import itertools

import numpy as np
import pytest
from scipy.special import expit, logsumexp
from scipy.stats import chisquare

from src.business.generator import (GibbsWithinSampler, attach_joiners, gibbs_within, init_state, sample_between,
                                    simulate, simulate_transition, step_membership)
from src.business.statistics import StatisticSpec, batch_stats
from src.business.structure import build_cluster_view
from src.models.errors import ConfigError
from src.models.network import from_edges
from src.models.thergm_config import ThergmConfig, TransitionMatrix, calibrate_edges_stability
from src.utils.seeding import derive_rng


def test_simulation_is_reproducible(small_config):
    a = simulate(small_config)
    b = simulate(small_config)
    assert all(np.array_equal(x, y) for x, y in zip(a.net.slices, b.net.slices))
    assert np.array_equal(a.truth.labels, b.truth.labels)
    c = simulate(small_config, seed=small_config.seed + 1)
    assert not all(np.array_equal(x, y) for x, y in zip(a.net.slices, c.net.slices))


def test_simulation_shapes_and_trace(small_simulation, small_config):
    assert len(small_simulation.net) == small_config.T + 1
    assert small_simulation.net.n == 16
    assert small_simulation.truth.labels.shape == (16, small_config.T + 1)
    assert [entry["t"] for entry in small_simulation.trace] == [1, 2, 3]
    for entry in small_simulation.trace:
        assert len(entry["clusters"]) == 2


def test_identity_transition_keeps_memberships():
    cfg = ThergmConfig(K=3, n_per_cluster=(5, 5, 5), T=4, B=TransitionMatrix.identity(3), seed=2)
    sim = simulate(cfg)
    assert np.all(sim.truth.labels == sim.truth.labels[:, [0]])
    assert all(entry["movers"] == 0 for entry in sim.trace)


def test_step_membership_frequencies_follow_transition_row():
    B = TransitionMatrix(np.array([[0.6, 0.3, 0.1], [0.0, 1.0, 0.0], [0.2, 0.2, 0.6]]))
    rng = np.random.default_rng(0)
    labels = step_membership(np.ones(20000, dtype=np.int64), B, rng)
    freq = np.bincount(labels, minlength=4)[1:] / labels.size
    np.testing.assert_allclose(freq, [0.6, 0.3, 0.1], atol=0.015)
    assert np.all(step_membership(np.full(50, 2), B, rng) == 2)


def test_between_ties_never_join_same_cluster():
    labels = np.repeat([1, 2, 3], 10)
    pairs = sample_between(labels, 0.5, np.random.default_rng(1))
    assert len(pairs) > 0
    assert np.all(labels[pairs[:, 0]] != labels[pairs[:, 1]])


def test_attach_joiners_degree_plus_one_weights():
    # incumbents 0..3 with degrees 3, 1, 1, 1 inside the cluster at t-1
    y_prev = from_edges(5, [(0, 1), (0, 2), (0, 3)])
    labels_prev = np.array([1, 1, 1, 1, 2])
    labels_curr = np.array([1, 1, 1, 1, 1])
    view = build_cluster_view(y_prev, y_prev, labels_prev, labels_curr, k=1)
    counts = np.zeros(4)
    rng = np.random.default_rng(7)
    draws = 6000
    for _ in range(draws):
        (joiner, target), = attach_joiners(view, 1, rng)
        assert joiner == 4
        counts[target] += 1
    expected = np.array([4, 2, 2, 2]) / 10 * draws
    assert chisquare(counts, expected).pvalue > 0.001


def test_attach_joiners_connects_to_all_small_incumbent_sets():
    y_prev = from_edges(4, [(0, 1)])
    view = build_cluster_view(y_prev, y_prev, np.array([1, 1, 2, 2]), np.array([1, 1, 1, 2]), k=1)
    edges = attach_joiners(view, 3, np.random.default_rng(0))
    assert sorted(edges) == [(2, 0), (2, 1)]


def test_single_node_cluster_has_no_within_ties():
    y_prev = from_edges(4, [(0, 1), (2, 3)])
    labels = np.array([1, 2, 2, 2])
    thetas = np.array([[5.0], [5.0]])
    y, entry = simulate_transition(y_prev, labels, labels, StatisticSpec.parse("edges"), thetas,
                                   p_between=0.0, m_attach=2, sweeps=3, seed=0, t=1)
    assert y[0].sum() == 0
    assert entry["clusters"][0]["remain"] == 1


@pytest.mark.slow
def test_gibbs_matches_exact_transition_distribution():
    spec = StatisticSpec.parse("edges,triangles,stability")
    theta = np.array([-0.5, 0.3, 0.8])
    y_prev = from_edges(4, [(0, 1), (1, 2)])
    n = 4
    iu, ju = np.triu_indices(n, k=1)
    graphs = []
    for bits in itertools.product([0, 1], repeat=len(iu)):
        y = np.zeros((n, n))
        y[iu, ju] = bits
        y[ju, iu] = bits
        graphs.append(y)
    graphs = np.array(graphs)
    log_weights = batch_stats(spec, graphs, y_prev) @ theta
    exact = np.exp(log_weights - logsumexp(log_weights))
    powers = 2 ** np.arange(len(iu))
    codes = np.empty(len(graphs), dtype=np.int64)
    codes[graphs[:, iu, ju].astype(np.int64) @ powers] = np.arange(len(graphs))

    sampler = GibbsWithinSampler(spec, theta, y_prev, derive_rng(0, "test-gibbs"))
    states = sampler.sample_chain(y_prev, burn_in=200, n_samples=100_000, thin=5, keep="states")
    counts = np.bincount(codes[states[:, iu, ju].astype(np.int64) @ powers], minlength=len(graphs))
    tv = 0.5 * np.abs(counts / counts.sum() - exact).sum()
    assert tv < 0.02


def test_gibbs_edges_only_density():
    spec = StatisticSpec.parse("edges")
    y_prev = np.zeros((12, 12), dtype=np.uint8)
    sampler = GibbsWithinSampler(spec, [-1.0], y_prev, np.random.default_rng(4))
    stats = sampler.sample_chain(y_prev, burn_in=5, n_samples=300)
    density = stats[:, 0].mean() / 66
    assert density == pytest.approx(expit(-1.0), abs=0.02)


def test_init_state_blocks(small_config):
    cfg = dataclasses.replace(small_config, n_per_cluster=(3, 2), p_within_init=1.0, p_between=0.0)
    y, labels = init_state(cfg, np.random.default_rng(0))
    assert labels.tolist() == [1, 1, 1, 2, 2]
    expected = (labels[:, None] == labels[None, :]).astype(np.uint8)
    np.fill_diagonal(expected, 0)
    np.testing.assert_array_equal(y, expected)


def test_gibbs_within_follows_extreme_coefficients():
    y_prev = from_edges(5, [(0, 1), (1, 2), (3, 4)])
    labels = np.array([1, 1, 1, 1, 2])
    view = build_cluster_view(y_prev, y_prev, labels, labels, k=1)
    spec = StatisticSpec.parse("edges")
    empty = gibbs_within(view, spec, [-30.0], sweeps=2, rng=np.random.default_rng(1))
    full = gibbs_within(view, spec, [30.0], sweeps=2, rng=np.random.default_rng(1))
    assert empty.shape == (4, 4) and empty.sum() == 0
    assert full.sum() == 4 * 3


def test_edges_stability_calibration():
    edges, stability = calibrate_edges_stability(0.1, 0.1)
    keep, form = expit(edges + stability), expit(edges - stability)
    assert keep == pytest.approx(0.9)
    assert form / (form + 1 - keep) == pytest.approx(0.1)
    with pytest.raises(ConfigError):
        calibrate_edges_stability(0.0, 0.1)
    with pytest.raises(ConfigError):
        calibrate_edges_stability(0.95, 0.9)
