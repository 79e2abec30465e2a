"""
TERGM Estimation

Estimators for one cluster's TERGM coefficients given memberships:

- ``mple``: maximum pseudo-likelihood (logistic regression on change
  statistics), the default starting point and fallback.
- ``exact_mle``: exact likelihood by enumerating every successor graph;
  only feasible for tiny node sets and used as a validation oracle.
- ``mcmc_mle``: Geyer-Thompson importance-sampling maximum likelihood with
  networks simulated by the Gibbs sampler of the generator.

The likelihood of a cluster is a product over transitions, each on its own
remain-set, with one coefficient vector shared across steps.
"""

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from multiprocessing import Pool
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp
from scipy.stats import chi2

from ..models.errors import ClusterTooSmallError, DataError, NumericalError
from ..models.network import DynamicNetwork, MembershipSeries
from ..models.results import FitResult, TransitionSeries
from ..utils.seeding import derive_rng, derive_seed
from .generator import GibbsWithinSampler
from .statistics import StatisticSpec, batch_stats, change_stats_matrix, temporal_stats
from .structure import build_cluster_view

logger = logging.getLogger(__name__)

SEPARATION_BOUND = 15.0
MAX_EXACT_NODES = 6
Objective = Callable[[np.ndarray], Tuple[float, np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class McmcMleSettings:
    """Tuning of the MCMC-MLE outer loop.

    ``samples`` drives the coarse iterations, which stop once the observed
    statistics are within ``noise_level`` Monte Carlo noise of the simulated
    mean. The refinement rounds then start at ``final_samples`` per
    transition and grow the sample (up to ``max_samples``) until the Monte
    Carlo standard error of every coefficient is at most ``target_mcse``.
    """
    samples: int = 200
    burn_in: int = 20
    thin: int = 1
    max_iter: int = 20
    step_cap: float = 1.0
    min_ess: float = 0.1
    noise_level: float = 0.95
    final_samples: int = 1000
    max_samples: int = 5000
    target_mcse: float = 0.05
    final_rounds: int = 4
    seed: int = 0


def _solve(info: np.ndarray, grad: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(info, grad)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(info, grad, rcond=None)[0]


def _std_errors(info: np.ndarray) -> np.ndarray:
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(info)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _free_coordinates(theta: np.ndarray, grad: np.ndarray, lower: np.ndarray,
                      upper: np.ndarray) -> np.ndarray:
    """Mask of coordinates not held at a bound by a gradient pointing outwards."""
    at_lower = (theta <= lower + 1e-9) & (grad < 0)
    at_upper = (theta >= upper - 1e-9) & (grad > 0)
    return ~(at_lower | at_upper)


def _newton_maximize(objective: Objective, theta0: np.ndarray, max_iter: int, tol: float,
                     bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None):
    """Damped Newton-Raphson for a concave objective returning (value, grad, -hessian).

    With ``bounds=(lower, upper)`` the iterate stays in the box; coordinates
    pinned at a bound are left out of the Newton system.
    """
    theta = np.array(theta0, dtype=np.float64)
    if bounds is not None:
        theta = np.clip(theta, *bounds)
    value, grad, info = objective(theta)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        free = np.ones(theta.size, dtype=bool) if bounds is None else _free_coordinates(theta, grad, *bounds)
        if not free.any() or np.linalg.norm(grad[free]) < tol:
            iterations -= 1
            break
        step = np.zeros_like(theta)
        step[free] = _solve(info[np.ix_(free, free)], grad[free])
        for _ in range(40):
            candidate = theta + step
            if bounds is not None:
                candidate = np.clip(candidate, *bounds)
            cand_value, cand_grad, cand_info = objective(candidate)
            if np.isfinite(cand_value) and cand_value >= value - 1e-12:
                break
            step = step / 2.0
        else:
            break
        if np.allclose(candidate, theta, rtol=0.0, atol=1e-14):
            theta, value, grad, info = candidate, cand_value, cand_grad, cand_info
            break
        theta, value, grad, info = candidate, cand_value, cand_grad, cand_info
    return theta, value, grad, info, iterations


def _design(spec: StatisticSpec, series: TransitionSeries) -> Tuple[np.ndarray, np.ndarray]:
    """Stack change statistics and responses of every dyad of every transition."""
    rows, responses = [], []
    for y_prev, y_curr in series:
        n = len(y_curr)
        if n < 2:
            continue
        iu, ju = np.triu_indices(n, k=1)
        rows.append(change_stats_matrix(spec, y_curr, y_prev)[iu, ju])
        responses.append(np.asarray(y_curr, dtype=np.float64)[iu, ju])
    if not rows:
        raise DataError("no dyads to fit")
    return np.vstack(rows), np.concatenate(responses)


def mple(spec: StatisticSpec, series: TransitionSeries, max_iter: int = 100,
         tol: float = 1e-8) -> FitResult:
    """Maximum pseudo-likelihood estimate by Newton-Raphson logistic regression."""
    series.require_nonempty()
    X, y = _design(spec, series)
    if y.min() == y.max():
        raise DataError("degenerate response: every dyad has the same value")

    def objective(theta):
        eta = X @ theta
        p = expit(eta)
        value = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
        grad = X.T @ (y - p)
        info = (X * (p * (1.0 - p))[:, None]).T @ X
        return value, grad, info

    theta, value, grad, info, iterations = _newton_maximize(objective, np.zeros(spec.p), max_iter, tol)
    separated = bool(np.any(~np.isfinite(theta)) or np.any(np.abs(theta) > SEPARATION_BOUND))
    converged = bool(np.linalg.norm(grad) < tol and not separated)
    if separated:
        logger.warning(f"MPLE: separation detected, estimates {np.round(theta, 2).tolist()}")
    return FitResult(terms=spec.names, theta_hat=theta, std_err=_std_errors(info), method="mple",
                     iterations=iterations, converged=converged, loglik=value,
                     metadata={"naive_std_errors": True, "separation": separated,
                               "gradient_norm": float(np.linalg.norm(grad)),
                               "dyads": int(y.size)})


@lru_cache(maxsize=8)
def _all_graphs(n: int) -> np.ndarray:
    """Every undirected graph on n nodes as an (2^D, n, n) stack."""
    iu, ju = np.triu_indices(n, k=1)
    D = iu.size
    codes = np.arange(2 ** D, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(D)) & 1).astype(np.float64)
    graphs = np.zeros((2 ** D, n, n))
    graphs[:, iu, ju] = bits
    graphs[:, ju, iu] = bits
    graphs.setflags(write=False)
    return graphs


def exact_mle(spec: StatisticSpec, series: TransitionSeries, max_iter: int = 100,
              tol: float = 1e-8) -> FitResult:
    """Exact MLE with the normalizing constant computed by full enumeration.

    The search is confined to |theta_k| <= SEPARATION_BOUND. A coefficient
    whose likelihood keeps rising towards infinity ends on the bound and the
    fit is reported as diverged, the same way ``mcmc_mle`` reports it.
    """
    series.require_nonempty()
    if series.max_nodes > MAX_EXACT_NODES:
        raise DataError(f"exact MLE enumerates at most {MAX_EXACT_NODES} nodes per transition, "
                        f"got {series.max_nodes}")
    observed, enumerated = [], []
    for y_prev, y_curr in series:
        if len(y_curr) < 2:
            continue
        observed.append(temporal_stats(spec, y_curr, y_prev))
        enumerated.append(batch_stats(spec, _all_graphs(len(y_curr)), y_prev))
    if not observed:
        raise DataError("no dyads to fit")
    s_obs = np.sum(observed, axis=0)

    def objective(theta):
        value = float(theta @ s_obs)
        expected = np.zeros(spec.p)
        info = np.zeros((spec.p, spec.p))
        for S in enumerated:
            a = S @ theta
            log_psi = logsumexp(a)
            w = np.exp(a - log_psi)
            mean = w @ S
            centered = S - mean
            value -= log_psi
            expected += mean
            info += (centered * w[:, None]).T @ centered
        return value, s_obs - expected, info

    bounds = _global_bounds(spec.p)
    theta, value, grad, info, iterations = _newton_maximize(objective, np.zeros(spec.p), max_iter, tol,
                                                            bounds=bounds)
    free = _free_coordinates(theta, grad, *bounds)
    pinned = _pinned_terms(spec, theta)
    converged = bool(np.linalg.norm(grad[free]) < tol and not pinned)
    return FitResult(terms=spec.names, theta_hat=theta, std_err=_std_errors(info), method="exact",
                     iterations=iterations, converged=converged, loglik=value,
                     metadata={"moment_residual": float(np.max(np.abs(grad[free]), initial=0.0)),
                               "transitions": len(observed), "diverged": bool(pinned),
                               "pinned_terms": pinned})


def _global_bounds(p: int) -> Tuple[np.ndarray, np.ndarray]:
    bound = np.full(p, SEPARATION_BOUND)
    return -bound, bound


def _pinned_terms(spec: StatisticSpec, theta: np.ndarray) -> List[str]:
    """Names of the coefficients sitting on the separation bound."""
    return [name for name, value in zip(spec.names, theta) if abs(value) >= SEPARATION_BOUND - 1e-9]


def _simulate_stats(spec: StatisticSpec, theta: np.ndarray, series: TransitionSeries,
                    settings: McmcMleSettings, samples: int, stage: str, iteration: int) -> List[np.ndarray]:
    sims = []
    for idx, (y_prev, _) in enumerate(series):
        sampler = GibbsWithinSampler(spec, theta, y_prev, derive_rng(settings.seed, stage, iteration, idx))
        sims.append(sampler.sample_chain(y_prev, settings.burn_in, samples, settings.thin))
    return sims


def _mean_noise(S: np.ndarray, batches: int = 20) -> np.ndarray:
    """Monte Carlo covariance of the column means of a chain, by batch means."""
    m, p = S.shape
    b = min(batches, m)
    if b < 2:
        return np.zeros((p, p))
    size = m // b
    means = S[:b * size].reshape(b, size, p).mean(axis=1)
    return np.atleast_2d(np.cov(means, rowvar=False)) / b


def _noise_distance(observed: Sequence[np.ndarray], sims: Sequence[np.ndarray],
                    free: np.ndarray) -> float:
    """Squared Mahalanobis distance between observed and simulated mean statistics."""
    gap = np.sum([s_obs - S.mean(axis=0) for s_obs, S in zip(observed, sims)], axis=0)[free]
    noise = np.sum([_mean_noise(S) for S in sims], axis=0)[np.ix_(free, free)]
    return float(gap @ np.linalg.pinv(noise) @ gap)


def _within_noise(observed: Sequence[np.ndarray], sims: Sequence[np.ndarray], theta: np.ndarray,
                  level: float) -> bool:
    gap = np.sum([s_obs - S.mean(axis=0) for s_obs, S in zip(observed, sims)], axis=0)
    free = _free_coordinates(theta, gap, *_global_bounds(theta.size))
    if not free.any():
        return True
    return _noise_distance(observed, sims, free) <= chi2.ppf(level, df=int(free.sum()))


def _mc_standard_errors(sims: Sequence[np.ndarray], info: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Monte Carlo standard error of each coefficient (zero for pinned ones)."""
    lower, upper = _global_bounds(theta.size)
    free = (theta > lower + 1e-9) & (theta < upper - 1e-9)
    out = np.zeros(theta.size)
    if not free.any():
        return out
    inv = np.linalg.pinv(info[np.ix_(free, free)])
    noise = np.sum([_mean_noise(S) for S in sims], axis=0)[np.ix_(free, free)]
    out[free] = np.sqrt(np.clip(np.diag(inv @ noise @ inv), 0.0, None))
    return out


def _importance_objective(observed: Sequence[np.ndarray], sims: Sequence[np.ndarray],
                          theta_ref: np.ndarray) -> Objective:
    """Importance-sampled log-likelihood ratio l(theta) - l(theta_ref)."""
    def objective(theta):
        delta = theta - theta_ref
        value = 0.0
        grad = np.zeros_like(theta)
        info = np.zeros((theta.size, theta.size))
        for s_obs, S in zip(observed, sims):
            a = S @ delta
            log_mean = logsumexp(a) - np.log(len(a))
            w = np.exp(a - logsumexp(a))
            mean = w @ S
            centered = S - mean
            value += float(delta @ s_obs) - log_mean
            grad += s_obs - mean
            info += (centered * w[:, None]).T @ centered
        return value, grad, info
    return objective


def _min_ess_fraction(sims: Sequence[np.ndarray], delta: np.ndarray) -> float:
    fractions = []
    for S in sims:
        a = S @ delta
        w = np.exp(a - logsumexp(a))
        fractions.append(1.0 / np.sum(w ** 2) / len(w))
    return float(min(fractions))


def _mcmc_step(objective: Objective, sims: Sequence[np.ndarray], theta_ref: np.ndarray,
               settings: McmcMleSettings) -> Tuple[np.ndarray, int]:
    """Maximize the importance objective in the step box, halving while the ESS is too low."""
    lower, upper = _global_bounds(theta_ref.size)
    bounds = (np.maximum(theta_ref - settings.step_cap, lower), np.minimum(theta_ref + settings.step_cap, upper))
    theta_new = _newton_maximize(objective, theta_ref, 50, 1e-10, bounds=bounds)[0]
    refusals = 0
    for _ in range(20):
        if _min_ess_fraction(sims, theta_new - theta_ref) >= settings.min_ess:
            break
        refusals += 1
        theta_new = theta_ref + (theta_new - theta_ref) / 2.0
    return theta_new, refusals


def mcmc_mle(spec: StatisticSpec, series: TransitionSeries, theta0: Sequence[float],
             settings: Optional[McmcMleSettings] = None) -> FitResult:
    """Geyer-Thompson MCMC-MLE started at ``theta0`` (usually the MPLE).

    Coarse iterations with ``settings.samples`` networks per transition move
    the reference point until the observed statistics are indistinguishable
    from the simulated mean. Refinement rounds then repeat the step with
    larger samples until the Monte Carlo standard error reaches
    ``settings.target_mcse``. Coefficients are confined to
    |theta_k| <= SEPARATION_BOUND; one ending on the bound marks the fit as
    diverged.
    """
    settings = settings or McmcMleSettings()
    series.require_nonempty()
    pairs = [(p, c) for p, c in series if len(c) >= 2]
    if not pairs:
        raise DataError("no dyads to fit")
    usable = TransitionSeries(pairs)
    observed = [temporal_stats(spec, c, p) for p, c in usable]
    theta_ref = np.array(theta0, dtype=np.float64)
    if not np.all(np.isfinite(theta_ref)):
        raise NumericalError("non-finite starting value for MCMC-MLE")
    theta_ref = np.clip(theta_ref, *_global_bounds(spec.p))

    def advance(sims, stage, iteration):
        objective = _importance_objective(observed, sims, theta_ref)
        theta_new, refused = _mcmc_step(objective, sims, theta_ref, settings)
        value, _, info = objective(theta_new)
        if not np.isfinite(value) or not np.all(np.isfinite(theta_new)):
            raise NumericalError("importance-sampled likelihood became non-finite",
                                 {"stage": stage, "iteration": iteration, "theta": theta_ref.tolist()})
        history.append(theta_new.tolist())
        logger.debug(f"MCMC-MLE {stage} {iteration}: theta={np.round(theta_new, 4).tolist()}")
        return theta_new, value, info, refused

    history: List[List[float]] = []
    refusals = 0
    loglik_gain = 0.0
    coarse_settled = False
    iteration = 0
    for iteration in range(1, settings.max_iter + 1):
        sims = _simulate_stats(spec, theta_ref, usable, settings, settings.samples, "mcmc-mle", iteration)
        if _within_noise(observed, sims, theta_ref, settings.noise_level):
            coarse_settled = True
            break
        theta_ref, value, _, refused = advance(sims, "iteration", iteration)
        loglik_gain += value
        refusals += refused
    if not coarse_settled:
        logger.warning(f"MCMC-MLE: observed statistics still outside Monte Carlo noise after "
                       f"{settings.max_iter} iterations; refining anyway")

    samples = max(settings.final_samples, settings.samples)
    mcse = np.full(spec.p, np.nan)
    info = np.eye(spec.p)
    settled = False
    rounds = 0
    for rounds in range(1, settings.final_rounds + 1):
        sims = _simulate_stats(spec, theta_ref, usable, settings, samples, "mcmc-mle-final", rounds)
        within = _within_noise(observed, sims, theta_ref, settings.noise_level)
        theta_ref, value, info, refused = advance(sims, "refinement", rounds)
        loglik_gain += value
        refusals += refused
        mcse = _mc_standard_errors(sims, info, theta_ref)
        worst = float(np.max(mcse))
        logger.debug(f"MCMC-MLE refinement {rounds}: {samples} samples, max MC standard error {worst:.4f}")
        if within and worst <= settings.target_mcse:
            settled = True
            break
        if within and samples >= settings.max_samples:
            break
        needed = int(np.ceil(samples * 1.2 * (worst / settings.target_mcse) ** 2))
        samples = int(min(settings.max_samples, max(samples, needed)))
    if refusals:
        logger.warning(f"MCMC-MLE: {refusals} step(s) shortened for low effective sample size")
    pinned = _pinned_terms(spec, theta_ref)
    if pinned:
        logger.warning(f"MCMC-MLE: {pinned} diverged to the bound +/-{SEPARATION_BOUND:g}")
    return FitResult(terms=spec.names, theta_hat=theta_ref, std_err=_std_errors(info), method="mcmc",
                     iterations=iteration + rounds, converged=bool(settled and not pinned), loglik=loglik_gain,
                     metadata={"loglik_kind": "ratio_to_start", "start": list(map(float, theta0)),
                               "ess_refusals": refusals, "history": history,
                               "samples_per_transition": samples, "mc_std_errors": mcse.tolist(),
                               "diverged": bool(pinned), "pinned_terms": pinned})


def build_transition_series(net: DynamicNetwork, m: MembershipSeries, k: int,
                            min_nodes: int = 3) -> TransitionSeries:
    """Remain-set transitions of cluster ``k`` with at least ``min_nodes`` nodes."""
    m.check_matches(net)
    net.require_temporal()
    series = TransitionSeries()
    for t in range(1, net.T + 1):
        view = build_cluster_view(net.slice(t - 1), net.slice(t), m.at(t - 1), m.at(t), k, t)
        if view.size >= min_nodes:
            series.add(view.prev_adj, view.curr_adj, view.remain)
    return series


def fit_series(spec: StatisticSpec, series: TransitionSeries, settings: McmcMleSettings,
               method: str = "mcmc") -> FitResult:
    """MPLE start, then MCMC-MLE; falls back to the MPLE when MCMC-MLE fails."""
    start = mple(spec, series)
    if method == "mple":
        return start
    theta0 = np.clip(start.theta_hat, -SEPARATION_BOUND, SEPARATION_BOUND)
    try:
        return mcmc_mle(spec, series, theta0, settings)
    except NumericalError as exc:
        logger.warning(f"MCMC-MLE failed ({exc}); falling back to MPLE")
        start.metadata["fallback"] = "mple"
        return start


def _fit_cluster_job(args) -> Optional[FitResult]:
    spec, net, m, k, settings, method, skip_small = args
    series = build_transition_series(net, m, k)
    if not len(series):
        if skip_small:
            logger.warning(f"Cluster {k} too small to fit; skipped")
            return None
        raise ClusterTooSmallError(k, f"cluster {k} too small to fit: fewer than 3 remaining nodes at every t")
    logger.info(f"Fitting cluster {k}: {len(series)} transitions, "
                f"{sum(len(p) for p, _ in series)} node-steps")
    result = fit_series(spec, series, replace(settings, seed=derive_seed(settings.seed, "cluster-fit", k)),
                        method)
    result.cluster = k
    return result


def pooled_cluster_fit(spec: StatisticSpec, net: DynamicNetwork, m: MembershipSeries,
                       settings: Optional[McmcMleSettings] = None, pooled: bool = False,
                       method: str = "mcmc", workers: int = 1,
                       skip_small: bool = False) -> List[Optional[FitResult]]:
    """One TERGM fit per cluster (or one shared fit with ``pooled=True``).

    With ``skip_small`` a cluster that never has 3 remaining nodes yields
    ``None`` instead of raising ClusterTooSmallError.
    """
    settings = settings or McmcMleSettings()
    m.check_matches(net)
    if pooled:
        series = TransitionSeries()
        for k in range(1, m.K + 1):
            series.extend(build_transition_series(net, m, k))
        if not len(series):
            raise ClusterTooSmallError(0, "no cluster has 3 remaining nodes at any time")
        shared = fit_series(spec, series, settings, method)
        results = []
        for k in range(1, m.K + 1):
            result = replace(shared, cluster=k, metadata={**shared.metadata, "pooled": True})
            results.append(result)
        return results
    jobs = [(spec, net, m, k, settings, method, skip_small) for k in range(1, m.K + 1)]
    if workers > 1 and len(jobs) > 1:
        with Pool(processes=min(workers, len(jobs))) as pool:
            return pool.map(_fit_cluster_job, jobs)
    return [_fit_cluster_job(job) for job in jobs]


def estimate_between_density(net: DynamicNetwork, m: MembershipSeries) -> float:
    """Pooled cross-cluster tie density over all slices."""
    m.check_matches(net)
    n = net.n
    iu, ju = np.triu_indices(n, k=1)
    ties = dyads = 0
    for t in range(len(net)):
        labels = m.at(t)
        cross = labels[iu] != labels[ju]
        ties += int(net.slice(t)[iu[cross], ju[cross]].sum())
        dyads += int(cross.sum())
    return ties / dyads if dyads else 0.0


__all__ = [
    "McmcMleSettings",
    "build_transition_series",
    "estimate_between_density",
    "exact_mle",
    "fit_series",
    "mcmc_mle",
    "mple",
    "pooled_cluster_fit",
]
