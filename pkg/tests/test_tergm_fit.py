from dataclasses import replace

import numpy as np
import pytest

from src.business.generator import GibbsWithinSampler
from src.business.statistics import StatisticSpec
from src.business.tergm_fit import (SEPARATION_BOUND, McmcMleSettings, build_transition_series,
                                    estimate_between_density, exact_mle, fit_series, mcmc_mle, mple,
                                    pooled_cluster_fit)
from src.models.errors import ClusterTooSmallError, DataError
from src.models.network import DynamicNetwork, MembershipSeries, complete_graph, empty_graph, from_edges
from src.models.results import TransitionSeries
from src.utils.seeding import derive_rng


def _series(*pairs):
    series = TransitionSeries()
    for prev_edges, curr_edges in pairs:
        series.add(from_edges(5, prev_edges), from_edges(5, curr_edges))
    return series


@pytest.fixture
def quarter_density_series():
    # 5 ties over 20 dyads
    return _series(([(0, 1)], [(0, 1), (1, 2), (2, 3)]),
                   ([(3, 4)], [(0, 1), (3, 4)]))


@pytest.fixture
def mixed_series():
    return _series(
        ([(0, 1), (1, 2), (2, 3), (3, 4)], [(0, 1), (1, 2), (0, 2), (3, 4), (2, 4)]),
        ([(0, 1), (0, 2), (1, 2), (3, 4)], [(0, 1), (1, 2), (1, 3), (3, 4)]),
        ([(0, 2), (1, 3), (2, 4)], [(0, 2), (1, 3), (1, 4), (0, 3)]),
        ([(0, 1), (2, 3), (3, 4), (1, 4)], [(0, 1), (2, 3), (0, 2), (3, 4)]),
        ([(0, 3), (1, 2), (2, 4)], [(0, 3), (1, 2), (2, 4), (1, 4), (0, 1), (0, 4)]),
    )


def test_mple_edges_only_is_logit_density(quarter_density_series):
    fit = mple(StatisticSpec.parse("edges"), quarter_density_series)
    assert fit.theta_hat[0] == pytest.approx(np.log(0.25 / 0.75), abs=1e-6)
    assert fit.converged
    assert fit.method == "mple"
    assert fit.metadata["naive_std_errors"] is True
    assert fit.metadata["dyads"] == 20


def test_exact_mle_edges_only_matches_mple(quarter_density_series):
    fit = exact_mle(StatisticSpec.parse("edges"), quarter_density_series)
    assert fit.theta_hat[0] == pytest.approx(np.log(1 / 3), abs=1e-6)
    assert fit.converged


def test_dyad_independent_spec_mple_equals_exact(mixed_series):
    spec = StatisticSpec.parse("edges,stability")
    pseudo = mple(spec, mixed_series)
    exact = exact_mle(spec, mixed_series)
    np.testing.assert_allclose(pseudo.theta_hat, exact.theta_hat, atol=1e-5)


def test_exact_mle_solves_moment_equation(mixed_series):
    fit = exact_mle(StatisticSpec.parse("edges,triangles,stability"), mixed_series)
    assert fit.converged
    assert fit.metadata["moment_residual"] < 1e-6
    assert np.all(np.isfinite(fit.std_err))


def test_mple_flags_separation():
    # every previous tie persists and no new tie forms: stability separates perfectly
    y = from_edges(5, [(0, 1), (1, 2), (2, 3)])
    series = TransitionSeries([(y, y.copy())])
    fit = mple(StatisticSpec.parse("edges,stability"), series)
    assert fit.metadata["separation"] is True
    assert not fit.converged


def test_mple_rejects_degenerate_response():
    series = TransitionSeries([(empty_graph(4), complete_graph(4))])
    with pytest.raises(DataError, match="degenerate"):
        mple(StatisticSpec.parse("edges"), series)


def test_exact_mle_refuses_large_node_sets():
    series = TransitionSeries([(empty_graph(7), from_edges(7, [(0, 1)]))])
    with pytest.raises(DataError):
        exact_mle(StatisticSpec.parse("edges"), series)


def test_empty_series_is_rejected():
    with pytest.raises(DataError):
        mple(StatisticSpec.parse("edges"), TransitionSeries())


ACCURATE = McmcMleSettings(samples=500, burn_in=50, final_samples=5000, max_samples=60000,
                           target_mcse=0.012, final_rounds=6, seed=1)


@pytest.fixture
def triangle_free_series():
    cycle = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]
    star = [(0, 1), (0, 2), (0, 3), (0, 4)]
    path = [(0, 1), (1, 2), (2, 3), (3, 4)]
    return _series(([], cycle), (cycle, star), (star, path))


def _random_series(seed, theta, spec, n=5, steps=3):
    rng = np.random.default_rng(seed)
    y = np.triu(rng.random((n, n)) < 0.4, 1).astype(np.uint8)
    y = y + y.T
    series = TransitionSeries()
    for t in range(steps):
        y_next = GibbsWithinSampler(spec, theta, y, derive_rng(seed, "series", t)).sample(y, 30)
        series.add(y, y_next)
        y = y_next
    return series


@pytest.mark.slow
def test_mcmc_mle_agrees_with_exact(mixed_series):
    spec = StatisticSpec.parse("edges,triangles,stability")
    exact = exact_mle(spec, mixed_series)
    assert exact.converged
    start = mple(spec, mixed_series)
    fit = mcmc_mle(spec, mixed_series, np.clip(start.theta_hat, -5, 5), ACCURATE)
    assert fit.method == "mcmc"
    assert fit.converged
    assert fit.metadata["loglik_kind"] == "ratio_to_start"
    assert max(fit.metadata["mc_std_errors"]) <= ACCURATE.target_mcse
    np.testing.assert_allclose(fit.theta_hat, exact.theta_hat, atol=0.05)


@pytest.mark.slow
def test_mcmc_mle_matches_exact_across_replicates():
    spec = StatisticSpec.parse("edges,triangles")
    close = 0
    for seed in range(20):
        series = _random_series(seed, [-0.5, 0.2], spec)
        exact = exact_mle(spec, series)
        fit = fit_series(spec, series, replace(ACCURATE, seed=seed))
        same_status = fit.metadata.get("diverged", False) == exact.metadata["diverged"]
        close += same_status and bool(np.all(np.abs(fit.theta_hat - exact.theta_hat) <= 0.05))
    assert close >= 19


def test_exact_mle_reports_divergence_on_bound(triangle_free_series):
    fit = exact_mle(StatisticSpec.parse("edges,triangles"), triangle_free_series)
    assert fit.theta_hat[1] == -SEPARATION_BOUND
    assert fit.metadata["diverged"] is True
    assert fit.metadata["pinned_terms"] == ["triangles"]
    assert not fit.converged
    # the free coefficient still solves its moment equation
    assert fit.metadata["moment_residual"] < 1e-6


@pytest.mark.slow
def test_mcmc_and_exact_report_divergence_alike(triangle_free_series):
    spec = StatisticSpec.parse("edges,triangles")
    exact = exact_mle(spec, triangle_free_series)
    fit = fit_series(spec, triangle_free_series, ACCURATE)
    assert fit.method == "mcmc"
    assert fit.metadata["diverged"] is exact.metadata["diverged"] is True
    assert fit.metadata["pinned_terms"] == exact.metadata["pinned_terms"]
    assert not fit.converged
    np.testing.assert_allclose(fit.theta_hat, exact.theta_hat, atol=0.05)


def test_mcmc_mle_stops_within_monte_carlo_noise(quarter_density_series):
    spec = StatisticSpec.parse("edges")
    settings = McmcMleSettings(samples=200, final_samples=2000, max_samples=20000, target_mcse=0.05, seed=3)
    fit = mcmc_mle(spec, quarter_density_series, [0.0], settings)
    assert fit.converged
    assert fit.metadata["mc_std_errors"][0] <= 0.05
    assert fit.theta_hat[0] == pytest.approx(np.log(1 / 3), abs=0.2)


def test_fit_series_mple_method_skips_mcmc(quarter_density_series):
    fit = fit_series(StatisticSpec.parse("edges"), quarter_density_series, McmcMleSettings(), method="mple")
    assert fit.method == "mple"


def test_transition_series_uses_remain_sets(path_net):
    m = MembershipSeries(np.array([[1, 1], [1, 1], [1, 1], [2, 1], [2, 2]]), 2)
    series = build_transition_series(path_net, m, 1)
    assert len(series) == 1
    assert series.node_sets[0].tolist() == [0, 1, 2]
    assert len(build_transition_series(path_net, m, 2)) == 0


def test_small_cluster_raises_or_is_skipped(path_net):
    # cluster 1 = {0, 1, 3} keeps a mix of ties and non-ties; cluster 2 has two nodes
    m = MembershipSeries.constant([1, 1, 2, 1, 2], 2, 2)
    spec = StatisticSpec.parse("edges")
    with pytest.raises(ClusterTooSmallError) as info:
        pooled_cluster_fit(spec, path_net, m, method="mple")
    assert info.value.cluster == 2
    fits = pooled_cluster_fit(spec, path_net, m, method="mple", skip_small=True)
    assert fits[1] is None
    assert fits[0].cluster == 1


def test_pooled_fit_shares_coefficients(small_simulation):
    spec = StatisticSpec.parse("edges,stability")
    fits = pooled_cluster_fit(spec, small_simulation.net, small_simulation.truth, pooled=True, method="mple")
    assert len(fits) == 2
    np.testing.assert_array_equal(fits[0].theta_hat, fits[1].theta_hat)
    assert [f.cluster for f in fits] == [1, 2]
    assert fits[0].metadata["pooled"] is True


def test_per_cluster_fits_on_simulated_data(small_simulation):
    spec = StatisticSpec.parse("edges,stability")
    fits = pooled_cluster_fit(spec, small_simulation.net, small_simulation.truth, method="mple")
    assert [f.cluster for f in fits] == [1, 2]
    assert all(f.terms == ("edges", "stability") for f in fits)


def test_between_density(path_net):
    m = MembershipSeries.constant([1, 1, 1, 2, 2], 2, 2)
    # one cross tie (2, 3) at t=0 over 6 cross dyads per slice
    assert estimate_between_density(path_net, m) == pytest.approx(1 / 12)
    assert estimate_between_density(DynamicNetwork.from_slices([empty_graph(3)]),
                                    MembershipSeries.constant([1, 1, 1], 1, 1)) == 0.0
