"""
Dynamic Latent Space Working Model

Stage-one membership estimation. Every node has a latent position per
slice; ties are independent given positions with

    logit P(y_ij = 1) = beta0 - beta1 * |z_i - z_j|,   beta1 >= 0.

Positions follow an AR(1) pull toward the mean of the node's current
cluster, clusters form a Gaussian mixture and memberships evolve as a
Markov chain. The posterior is explored by Metropolis-within-Gibbs; each
slice is projected onto the identification constraint
sqrt(mean |z_i|^2) = 1 after every sweep.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh, orthogonal_procrustes
from scipy.spatial.distance import pdist
from scipy.special import logit, logsumexp
from sklearn.cluster import KMeans
from tqdm import tqdm

from ..models.errors import ConfigError, DataError, NumericalError
from ..models.network import DynamicNetwork, MembershipSeries
from ..utils.seeding import derive_rng, derive_seed
from .bundles import DlsmBundle
from .clustering_interface import ClusteringModel, ClusteringResult
from .evaluation import align_labels, apply_permutation
from .structure import geodesic_distances

logger = logging.getLogger(__name__)

PRIORS: Dict[str, Any] = {
    "beta_sd": 10.0,
    "mu_var": 4.0,
    "sigma2_shape": 2.0,
    "sigma2_scale": 0.5,
    "lambda_concentration": 1.0,
    "transition_concentration": 1.0,
    "transition_stickiness": 4.0,
}


@dataclass(frozen=True)
class McmcSettings:
    """Chain length, thinning, proposal scales, position persistence and seed."""
    burn_in: int = 500
    samples: int = 500
    thin: int = 1
    proposal_step: float = 0.3
    beta_step: float = 0.05
    rho: float = 0.8
    seed: int = 0
    progress: bool = False

    def __post_init__(self):
        if self.burn_in < 0:
            raise ConfigError("BurnIn must be nonnegative")
        if self.samples < 1:
            raise ConfigError("Samples must be at least 1")
        if self.thin < 1:
            raise ConfigError("Thin must be at least 1")
        if self.proposal_step <= 0 or self.beta_step <= 0:
            raise ConfigError("ProposalStep must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"Rho must lie in [0, 1), got {self.rho}")


@dataclass
class LatentState:
    """One state of the chain."""
    Z: np.ndarray          # (T+1, n, d)
    mu: np.ndarray         # (K, d)
    sigma2: np.ndarray     # (K,)
    lam: np.ndarray        # (K,)
    M: np.ndarray          # (n, T+1) labels 1..K
    beta0: float
    beta1: float
    Pi: np.ndarray         # (K, K)

    @property
    def K(self) -> int:
        return self.mu.shape[0]

    @property
    def d(self) -> int:
        return self.Z.shape[2]

    def copy(self) -> "LatentState":
        return LatentState(self.Z.copy(), self.mu.copy(), self.sigma2.copy(), self.lam.copy(),
                           self.M.copy(), float(self.beta0), float(self.beta1), self.Pi.copy())


@dataclass
class ChainOutput:
    state: LatentState
    samples: List[np.ndarray]
    diagnostics: Dict[str, Any] = field(default_factory=dict)


def _project(Z_t: np.ndarray) -> Tuple[np.ndarray, float]:
    """Rescale one slice to root-mean-square norm 1; returns the slice and the factor used."""
    scale = float(np.sqrt(np.mean(np.sum(Z_t ** 2, axis=1))))
    if scale <= 0 or not np.isfinite(scale):
        return Z_t, 1.0
    return Z_t / scale, scale


def classical_mds(D: np.ndarray, d: int) -> np.ndarray:
    """Coordinates in R^d whose distances approximate ``D``."""
    n = D.shape[0]
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D ** 2) @ J
    values, vectors = eigh(B)
    order = np.argsort(values)[::-1][:d]
    X = vectors[:, order] * np.sqrt(np.clip(values[order], 0.0, None))
    if X.shape[1] < d:
        X = np.hstack([X, np.zeros((n, d - X.shape[1]))])
    return X


def _slice_positions(y: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
    n = y.shape[0]
    D = geodesic_distances(y)
    D[~np.isfinite(D)] = n
    X = classical_mds(D, d)
    # coincident points would freeze the distance model; separate them slightly
    X = X + 1e-3 * rng.standard_normal(X.shape)
    return _project(X)[0]


def init_latent(net: DynamicNetwork, K: int, d: int = 2, seed: int = 0, rho: float = 0.8) -> LatentState:
    """Classical MDS per slice (Procrustes-aligned over time), k-means labels and mixture moments."""
    if d < 1:
        raise ConfigError("Dimension must be at least 1")
    if K > net.n:
        raise DataError(f"K={K} exceeds the number of nodes n={net.n}")
    rng = derive_rng(seed, "dlsm-init")
    Z = np.empty((len(net), net.n, d))
    for t in range(len(net)):
        Z[t] = _slice_positions(net.slice(t), d, rng)
        if t > 0:
            R, _ = orthogonal_procrustes(Z[t], Z[t - 1])
            Z[t] = Z[t] @ R

    if K == 1:
        M = np.ones((net.n, len(net)), dtype=np.int64)
        centers = Z[0].mean(axis=0, keepdims=True)
    else:
        km = KMeans(n_clusters=K, n_init=10, random_state=derive_seed(seed, "dlsm-kmeans"))
        km.fit(Z[0])
        centers = km.cluster_centers_
        M = np.empty((net.n, len(net)), dtype=np.int64)
        for t in range(len(net)):
            dist = ((Z[t][:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            M[:, t] = np.argmin(dist, axis=1) + 1

    mu = np.array(centers, dtype=np.float64)
    sigma2 = np.empty(K)
    for k in range(K):
        members = Z.transpose(1, 0, 2)[M == k + 1]
        if len(members) == 0:
            mu[k] = centers[k]
            sigma2[k] = 0.1
            continue
        mu[k] = members.mean(axis=0)
        sigma2[k] = max(float(np.mean((members - mu[k]) ** 2)), 0.01)
    lam = np.bincount(M[:, 0] - 1, minlength=K) / net.n
    lam = (lam + 1e-3) / (lam + 1e-3).sum()
    Pi = 0.9 * np.eye(K) + 0.1 / K

    density = np.mean([y[np.triu_indices(net.n, k=1)].mean() for y in net.slices]) if net.n > 1 else 0.5
    density = float(np.clip(density, 1e-3, 1 - 1e-3))
    mean_dist = float(np.mean([pdist(Z[t]).mean() for t in range(len(net))])) if net.n > 1 else 0.0
    beta1 = 1.0
    beta0 = float(logit(density)) + beta1 * mean_dist
    logger.debug(f"DLSM init: beta0={beta0:.3f}, cluster sizes at t=0 {np.bincount(M[:, 0], minlength=K + 1)[1:]}")
    return LatentState(Z=Z, mu=mu, sigma2=sigma2, lam=lam, M=M, beta0=beta0, beta1=beta1, Pi=Pi)


def loglik_slice(Z_t: np.ndarray, beta0: float, beta1: float, y_t: np.ndarray) -> float:
    """Bernoulli log-likelihood of one slice under the distance model."""
    n = np.shape(y_t)[0]
    if np.shape(Z_t)[0] != n:
        raise DataError(f"{np.shape(Z_t)[0]} positions for a slice of {n} nodes")
    if n < 2:
        return 0.0
    eta = beta0 - beta1 * pdist(Z_t)
    y = np.asarray(y_t, dtype=np.float64)[np.triu_indices(n, k=1)]
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _node_loglik(z: np.ndarray, i: int, Z_t: np.ndarray, y_row: np.ndarray, beta0: float, beta1: float) -> float:
    dist = np.sqrt(np.sum((Z_t - z) ** 2, axis=1))
    eta = beta0 - beta1 * dist
    terms = y_row * eta - np.logaddexp(0.0, eta)
    terms[i] = 0.0
    return float(terms.sum())


def _log_normal(x: np.ndarray, mean: np.ndarray, var: float) -> float:
    return float(-0.5 * np.sum((x - mean) ** 2) / var - 0.5 * x.size * np.log(var))


class _Sampler:
    """One Metropolis-within-Gibbs chain."""

    def __init__(self, net: DynamicNetwork, state: LatentState, settings: McmcSettings,
                 rng: np.random.Generator):
        self.Y = np.stack([np.asarray(y, dtype=np.float64) for y in net.slices])
        self.state = state
        self.settings = settings
        self.rng = rng
        self.n = net.n
        self.T = net.T
        self.rho = settings.rho
        self.accepted = {"positions": 0, "beta": 0}
        self.proposed = {"positions": 0, "beta": 0}

    def _prior_mean(self, t: int, i: int, k: int, z_prev: Optional[np.ndarray] = None) -> np.ndarray:
        s = self.state
        if t == 0:
            return s.mu[k - 1]
        z_prev = s.Z[t - 1, i] if z_prev is None else z_prev
        return self.rho * z_prev + (1.0 - self.rho) * s.mu[k - 1]

    def _position_logpost(self, t: int, i: int, z: np.ndarray) -> float:
        s = self.state
        k = s.M[i, t]
        value = _node_loglik(z, i, s.Z[t], self.Y[t, i], s.beta0, s.beta1)
        value += _log_normal(z, self._prior_mean(t, i, k), s.sigma2[k - 1])
        if t < self.T:
            k_next = s.M[i, t + 1]
            value += _log_normal(s.Z[t + 1, i], self._prior_mean(t + 1, i, k_next, z_prev=z),
                                 s.sigma2[k_next - 1])
        return value

    def update_positions(self):
        s = self.state
        step = self.settings.proposal_step
        for t in range(self.T + 1):
            for i in range(self.n):
                current = s.Z[t, i].copy()
                proposal = current + step * self.rng.standard_normal(s.d)
                log_ratio = self._position_logpost(t, i, proposal) - self._position_logpost(t, i, current)
                self.proposed["positions"] += 1
                if np.log(self.rng.random()) < log_ratio:
                    s.Z[t, i] = proposal
                    self.accepted["positions"] += 1

    def update_labels(self):
        s = self.state
        K = s.K
        if K == 1:
            return
        log_pi = np.log(s.Pi)
        for t in range(self.T + 1):
            log_p = np.empty((self.n, K))
            for k in range(1, K + 1):
                if t == 0:
                    mean = np.broadcast_to(s.mu[k - 1], s.Z[0].shape)
                    prior = np.log(s.lam[k - 1])
                else:
                    mean = self.rho * s.Z[t - 1] + (1.0 - self.rho) * s.mu[k - 1]
                    prior = log_pi[s.M[:, t - 1] - 1, k - 1]
                sq = np.sum((s.Z[t] - mean) ** 2, axis=1)
                log_p[:, k - 1] = prior - 0.5 * sq / s.sigma2[k - 1] - 0.5 * s.d * np.log(s.sigma2[k - 1])
                if t < self.T:
                    log_p[:, k - 1] += log_pi[k - 1, s.M[:, t + 1] - 1]
            probs = np.exp(log_p - logsumexp(log_p, axis=1, keepdims=True))
            u = self.rng.random(self.n)
            s.M[:, t] = np.minimum((u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1), K - 1) + 1

    def update_mixture(self):
        s = self.state
        K, d = s.K, s.d
        rho = self.rho
        for k in range(1, K + 1):
            in0 = s.M[:, 0] == k
            obs = [s.Z[0, in0]]
            weights = [np.ones(int(in0.sum()))]
            for t in range(1, self.T + 1):
                in_t = s.M[:, t] == k
                obs.append((s.Z[t, in_t] - rho * s.Z[t - 1, in_t]) / (1.0 - rho))
                weights.append(np.full(int(in_t.sum()), (1.0 - rho) ** 2))
            obs_all = np.vstack(obs)
            w_all = np.concatenate(weights)
            var = s.sigma2[k - 1]
            precision = 1.0 / PRIORS["mu_var"] + w_all.sum() / var
            mean = (w_all @ obs_all) / var / precision if len(w_all) else np.zeros(d)
            s.mu[k - 1] = mean + self.rng.standard_normal(d) / np.sqrt(precision)

            sq, count = 0.0, int(in0.sum())
            sq += float(np.sum((s.Z[0, in0] - s.mu[k - 1]) ** 2))
            for t in range(1, self.T + 1):
                in_t = s.M[:, t] == k
                mean_t = rho * s.Z[t - 1, in_t] + (1.0 - rho) * s.mu[k - 1]
                sq += float(np.sum((s.Z[t, in_t] - mean_t) ** 2))
                count += int(in_t.sum())
            shape = PRIORS["sigma2_shape"] + 0.5 * d * count
            scale = PRIORS["sigma2_scale"] + 0.5 * sq
            s.sigma2[k - 1] = scale / self.rng.gamma(shape)

        counts0 = np.bincount(s.M[:, 0] - 1, minlength=K)
        s.lam = self.rng.dirichlet(PRIORS["lambda_concentration"] + counts0)
        moves = np.zeros((K, K))
        for t in range(1, self.T + 1):
            np.add.at(moves, (s.M[:, t - 1] - 1, s.M[:, t] - 1), 1.0)
        for h in range(K):
            alpha = PRIORS["transition_concentration"] + moves[h]
            alpha[h] += PRIORS["transition_stickiness"]
            s.Pi[h] = self.rng.dirichlet(alpha)

    def total_loglik(self, beta0: float, beta1: float) -> float:
        return sum(loglik_slice(self.state.Z[t], beta0, beta1, self.Y[t]) for t in range(self.T + 1))

    def update_beta(self):
        s = self.state
        step = self.settings.beta_step
        current = self.total_loglik(s.beta0, s.beta1)
        for which in ("beta0", "beta1"):
            b0, b1 = s.beta0, s.beta1
            if which == "beta0":
                b0 = b0 + step * self.rng.standard_normal()
            else:
                b1 = abs(b1 + step * self.rng.standard_normal())
            proposal = self.total_loglik(b0, b1)
            prior_ratio = -0.5 * ((b0 ** 2 + b1 ** 2) - (s.beta0 ** 2 + s.beta1 ** 2)) / PRIORS["beta_sd"] ** 2
            self.proposed["beta"] += 1
            if np.log(self.rng.random()) < proposal - current + prior_ratio:
                s.beta0, s.beta1 = b0, b1
                current = proposal
                self.accepted["beta"] += 1
        if not np.isfinite(current):
            raise NumericalError("non-finite latent-space likelihood",
                                 {"beta0": s.beta0, "beta1": s.beta1, **self.acceptance()})
        return current

    def project(self):
        s = self.state
        factors = np.empty(self.T + 1)
        for t in range(self.T + 1):
            s.Z[t], factors[t] = _project(s.Z[t])
        c = float(np.mean(factors))
        s.beta1 *= c
        s.mu /= c
        s.sigma2 /= c ** 2

    def acceptance(self) -> Dict[str, float]:
        return {f"acceptance_{k}": self.accepted[k] / self.proposed[k] if self.proposed[k] else 0.0
                for k in self.accepted}

    def sweep(self) -> float:
        self.update_positions()
        self.update_labels()
        self.update_mixture()
        loglik = self.update_beta()
        self.project()
        return loglik


def run_chain(net: DynamicNetwork, K: int, d: int, settings: McmcSettings) -> ChainOutput:
    """Run one chain from the MDS initialization and retain label samples."""
    net.require_temporal()
    if K > net.n:
        raise DataError(f"K={K} exceeds the number of nodes n={net.n}")
    state = init_latent(net, K, d, settings.seed, settings.rho)
    sampler = _Sampler(net, state, settings, derive_rng(settings.seed, "dlsm-chain"))
    samples: List[np.ndarray] = []
    trace: List[float] = []
    total = settings.burn_in + settings.samples * settings.thin
    iterator = tqdm(range(total), desc="DLSM", disable=not settings.progress)
    for it in iterator:
        loglik = sampler.sweep()
        if it >= settings.burn_in and (it - settings.burn_in + 1) % settings.thin == 0:
            samples.append(state.M.copy())
            trace.append(loglik)
    diagnostics = {
        **sampler.acceptance(),
        "loglik_trace": trace,
        "loglik_mean": float(np.mean(trace)),
        "beta0": state.beta0,
        "beta1": state.beta1,
        "priors": dict(PRIORS),
        "settings": {"burn_in": settings.burn_in, "samples": settings.samples, "thin": settings.thin,
                     "proposal_step": settings.proposal_step, "rho": settings.rho, "seed": settings.seed,
                     "K": K, "d": d},
    }
    logger.info(f"DLSM chain done: position acceptance {diagnostics['acceptance_positions']:.2f}, "
                f"beta acceptance {diagnostics['acceptance_beta']:.2f}")
    return ChainOutput(state=state, samples=samples, diagnostics=diagnostics)


def posterior_modes(samples: List[np.ndarray], K: int) -> MembershipSeries:
    """Modal label per (node, time) after aligning every sample to the first one."""
    if not samples:
        raise DataError("posterior modes need at least one retained sample")
    reference = np.asarray(samples[0], dtype=np.int64)
    counts = np.zeros(reference.shape + (K,), dtype=np.int64)
    one_hot = np.eye(K, dtype=np.int64)
    for sample in samples:
        sample = np.asarray(sample, dtype=np.int64)
        aligned = apply_permutation(sample, align_labels(sample, reference, K)).reshape(sample.shape)
        counts += one_hot[aligned - 1]
    return MembershipSeries(np.argmax(counts, axis=-1) + 1, K)


def mcmc_fit(net: DynamicNetwork, K: int, d: int = 2,
             settings: Optional[McmcSettings] = None) -> Tuple[MembershipSeries, Dict[str, Any]]:
    """Posterior-mode memberships of the working model and the chain diagnostics."""
    output = run_chain(net, K, d, settings or McmcSettings())
    return posterior_modes(output.samples, K), output.diagnostics


class DynamicLatentSpaceModel(ClusteringModel):
    """The latent-space working model behind the common clustering interface.

    After ``fit`` the final chain state is available as ``bundle_`` for
    goodness of fit and prediction.
    """

    name = "dlsm"

    def __init__(self, K: int, d: int = 2, settings: Optional[McmcSettings] = None):
        super().__init__(K)
        if d < 1:
            raise ConfigError("Dimension must be at least 1")
        self.d = int(d)
        self.settings = settings or McmcSettings()
        self.bundle_: Optional[DlsmBundle] = None

    def fit(self, net: DynamicNetwork) -> ClusteringResult:
        self.check_input(net)
        self.logger.info(f"DLSM: K={self.K}, d={self.d}, burn-in {self.settings.burn_in}, "
                         f"{self.settings.samples} samples")
        output = run_chain(net, self.K, self.d, self.settings)
        memberships = posterior_modes(output.samples, self.K)
        state = output.state
        # express the final state's mixture in the labels of the modal memberships
        perm = align_labels(state.M, memberships.labels, self.K)
        order = np.argsort(perm)
        self.bundle_ = DlsmBundle(positions=state.Z.copy(), beta0=state.beta0, beta1=state.beta1,
                                  memberships=memberships, mu=state.mu[order], sigma2=state.sigma2[order],
                                  rho=self.settings.rho, transition=state.Pi[np.ix_(order, order)])
        self.result_ = ClusteringResult(memberships=memberships, model=self.name, diagnostics=output.diagnostics)
        return self.result_


__all__ = [
    "ChainOutput",
    "DynamicLatentSpaceModel",
    "LatentState",
    "McmcSettings",
    "classical_mds",
    "init_latent",
    "loglik_slice",
    "mcmc_fit",
    "posterior_modes",
    "run_chain",
]
