import numpy as np
import pytest
from scipy.spatial.distance import pdist
from scipy.special import expit

from src.business.dlsm import (DynamicLatentSpaceModel, McmcSettings, _Sampler, classical_mds, init_latent,
                               loglik_slice, mcmc_fit, posterior_modes)
from src.business.evaluation import misclustering
from src.models.errors import ConfigError, DataError
from src.models.network import from_edges

FAST = McmcSettings(burn_in=30, samples=20, seed=4)


def test_classical_mds_reproduces_planar_distances():
    points = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0], [1.0, 1.0], [2.0, 5.0]])
    D = np.sqrt(((points[:, None] - points[None]) ** 2).sum(axis=2))
    X = classical_mds(D, 2)
    np.testing.assert_allclose(pdist(X), pdist(points), atol=1e-8)


def test_slice_loglik_hand_computed():
    Z = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    y = from_edges(3, [(0, 1)])
    expected = np.log(expit(0.5 - 1.0)) + np.log(1 - expit(0.5 - 2.0)) + np.log(1 - expit(0.5 - np.sqrt(5)))
    assert loglik_slice(Z, 0.5, 1.0, y) == pytest.approx(expected)
    with pytest.raises(DataError):
        loglik_slice(Z[:2], 0.5, 1.0, y)


def test_posterior_modes_align_label_switched_samples():
    base = np.array([[1, 1], [1, 2], [2, 2], [2, 2]])
    switched = 3 - base
    noisy = base.copy()
    noisy[0, 0] = 2
    modes = posterior_modes([base, switched, noisy], 2)
    np.testing.assert_array_equal(modes.labels, base)
    with pytest.raises(DataError):
        posterior_modes([], 2)


def test_initialization_separates_cliques(cliques_net, cliques_truth):
    state = init_latent(cliques_net, 2, d=2, seed=0)
    assert state.Z.shape == (3, 10, 2)
    np.testing.assert_allclose(np.sqrt(np.mean(np.sum(state.Z[0] ** 2, axis=1))), 1.0)
    np.testing.assert_allclose(state.Pi.sum(axis=1), 1.0)
    assert state.M.shape == (10, 3)


def test_settings_validation():
    with pytest.raises(ConfigError):
        McmcSettings(rho=1.0)
    with pytest.raises(ConfigError):
        McmcSettings(samples=0)
    with pytest.raises(ConfigError):
        DynamicLatentSpaceModel(2, d=0)


def test_working_model_recovers_cliques(cliques_net, cliques_truth):
    model = DynamicLatentSpaceModel(2, d=2, settings=FAST)
    result = model.fit(cliques_net)
    assert misclustering(result.memberships, cliques_truth).average <= 0.1
    assert 0.0 < result.diagnostics["acceptance_positions"] <= 1.0
    assert len(result.diagnostics["loglik_trace"]) == FAST.samples
    bundle = model.bundle_
    assert bundle is not None and bundle.beta1 >= 0
    proba = bundle.predict_proba(cliques_net.slice(cliques_net.T))
    assert proba.shape == (10, 10)


def test_chain_is_reproducible(cliques_net):
    a, _ = mcmc_fit(cliques_net, 2, settings=FAST)
    b, _ = mcmc_fit(cliques_net, 2, settings=FAST)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_too_many_clusters(cliques_net):
    with pytest.raises(DataError):
        DynamicLatentSpaceModel(11, settings=FAST).fit(cliques_net)


def test_sampler_updates_keep_constraints(cliques_net):
    state = init_latent(cliques_net, 2, d=2, seed=1)
    rng = np.random.default_rng(8)
    state.Z = state.Z * rng.uniform(0.5, 3.0, size=(state.Z.shape[0], 1, 1))
    sampler = _Sampler(cliques_net, state, FAST, rng)
    for _ in range(5):
        sampler.update_labels()
        sampler.update_mixture()
        assert set(np.unique(state.M)) <= {1, 2}
        np.testing.assert_allclose(state.Pi.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(state.Pi >= 0)
        assert state.lam.sum() == pytest.approx(1.0)
        sampler.update_positions()
        sampler.project()
        rms = np.sqrt(np.mean(np.sum(state.Z ** 2, axis=2), axis=1))
        np.testing.assert_allclose(rms, 1.0, atol=1e-10)
        assert np.all(state.sigma2 > 0) and state.beta1 >= 0
