"""
Fitted Model Bundles

A bundle packages everything a fitted model needs to simulate the next
network slice and to score the dyads of that slice:

- ``ThergmBundle``: memberships, per-cluster TERGM coefficients, the
  estimated transition matrix and between-cluster density.
- ``DlsmBundle``: the latent-space working model's final positions,
  distance-model coefficients and mixture.

Both round-trip through plain dictionaries so the command line can hand
them from one step of a pipeline to the next.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Type

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import expit

from ..models.errors import DataError
from ..models.network import DynamicNetwork, MembershipSeries, validate_adjacency
from ..models.results import FitResult
from ..models.thergm_config import TransitionMatrix
from .evaluation import estimate_transition
from .generator import simulate_transition, step_membership
from .statistics import StatisticSpec, change_stats, change_stats_matrix
from .tergm_fit import McmcMleSettings, estimate_between_density, pooled_cluster_fit

logger = logging.getLogger(__name__)

BUNDLE_REGISTRY: Dict[str, Type["ModelBundle"]] = {}


def register_bundle(kind: str) -> Callable[[Type["ModelBundle"]], Type["ModelBundle"]]:
    def _decorator(cls):
        cls.kind = kind
        BUNDLE_REGISTRY[kind] = cls
        return cls
    return _decorator


class ModelBundle(ABC):
    """Common surface of fitted models used by goodness of fit and prediction."""

    kind: str = "abstract"
    memberships: Optional[MembershipSeries]

    @property
    @abstractmethod
    def is_fitted(self) -> bool:
        pass

    @abstractmethod
    def simulate_next(self, y_prev: np.ndarray, rng: np.random.Generator,
                      t: Optional[int] = None) -> np.ndarray:
        """
        Draw the slice following ``y_prev``.

        Args:
            y_prev: Adjacency at the previous time point
            rng: Random generator for this replicate
            t: Target time index within the fitted series, or None for the
               first unobserved slice

        Returns:
            Simulated adjacency
        """
        pass

    @abstractmethod
    def predict_proba(self, y_last: np.ndarray, t: Optional[int] = None,
                      membership: str = "fixed") -> np.ndarray:
        """Tie probabilities of the slice after ``y_last`` (n × n, zero diagonal)."""
        pass

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        pass

    def require_fitted(self):
        if not self.is_fitted:
            raise DataError(f"{self.kind} bundle is not fitted")

    def labels_for(self, t: Optional[int]) -> np.ndarray:
        """Memberships at target time ``t`` (the last fitted time when None)."""
        m = self.memberships
        if t is None:
            return m.at(m.T)
        if not 0 <= t <= m.T:
            raise DataError(f"time {t} outside the fitted range 0..{m.T}")
        return m.at(t)


def load_bundle(data: Dict[str, Any]) -> ModelBundle:
    """Rebuild a bundle from its dictionary form."""
    kind = data.get("model")
    if kind not in BUNDLE_REGISTRY:
        raise DataError(f"unknown bundle model '{kind}'; known: {sorted(BUNDLE_REGISTRY)}")
    return BUNDLE_REGISTRY[kind].from_dict(data)


def _memberships_from(data: Dict[str, Any]) -> MembershipSeries:
    try:
        return MembershipSeries(np.asarray(data["memberships"], dtype=np.int64), int(data["K"]))
    except KeyError as exc:
        raise DataError(f"bundle is missing field {exc}") from None


@register_bundle("thergm")
@dataclass
class ThergmBundle(ModelBundle):
    spec: StatisticSpec
    thetas: np.ndarray
    transition_matrix: TransitionMatrix
    p_between: float
    memberships: MembershipSeries
    m_attach: int = 2
    sweeps: int = 5
    fits: List[Optional[FitResult]] = field(default_factory=list)
    stage_one: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.spec = StatisticSpec.parse(self.spec)
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=np.float64))
        if not isinstance(self.transition_matrix, TransitionMatrix):
            self.transition_matrix = TransitionMatrix(np.asarray(self.transition_matrix))
        K = self.memberships.K
        if self.thetas.shape != (K, self.spec.p):
            raise DataError(f"bundle coefficients must be {K} x {self.spec.p}, got {self.thetas.shape}")
        if self.transition_matrix.K != K:
            raise DataError(f"bundle transition matrix is {self.transition_matrix.K} x "
                            f"{self.transition_matrix.K}, expected {K}")

    @classmethod
    def from_fits(cls, spec: StatisticSpec, fits: List[Optional[FitResult]],
                  transition_matrix: TransitionMatrix, p_between: float,
                  memberships: MembershipSeries, **kwargs) -> "ThergmBundle":
        """Assemble a bundle; clusters without a fit borrow the mean of the fitted ones."""
        fitted = [f for f in fits if f is not None]
        if not fitted:
            raise DataError("no cluster could be fitted")
        mean_theta = np.mean([f.theta_hat for f in fitted], axis=0)
        thetas = np.array([f.theta_hat if f is not None else mean_theta for f in fits])
        imputed = [k for k, f in enumerate(fits, start=1) if f is None]
        stage_one = dict(kwargs.pop("stage_one", {}))
        if imputed:
            logger.warning(f"Clusters {imputed} have no fit; using the mean coefficients")
            stage_one["imputed_clusters"] = imputed
        return cls(spec=spec, thetas=thetas, transition_matrix=transition_matrix, p_between=p_between,
                   memberships=memberships, fits=list(fits), stage_one=stage_one, **kwargs)

    @property
    def is_fitted(self) -> bool:
        return self.thetas is not None and self.memberships is not None

    def simulate_next(self, y_prev, rng, t=None, sample_membership: bool = False):
        self.require_fitted()
        y_prev = validate_adjacency(y_prev, "previous slice")
        m = self.memberships
        if t is None:
            labels_prev = m.at(m.T)
            labels_curr = step_membership(labels_prev, self.transition_matrix, rng) \
                if sample_membership else labels_prev
        else:
            if not 1 <= t <= m.T:
                raise DataError(f"time {t} outside the fitted transitions 1..{m.T}")
            labels_prev, labels_curr = m.at(t - 1), m.at(t)
        seed = int(rng.integers(2 ** 32))
        y, _ = simulate_transition(y_prev, labels_prev, labels_curr, self.spec, self.thetas,
                                   self.p_between, self.m_attach, self.sweeps, seed, t or m.T + 1)
        return y

    def predict_proba(self, y_last, t=None, membership="fixed"):
        """Conditional tie probabilities given ``y_last`` with change statistics evaluated on it.

        ``membership="fixed"`` keeps every node in its cluster at ``t`` (the
        last fitted time by default); ``"expected"`` averages the next
        memberships over the estimated transition matrix. Either way the
        statistics of cluster k count only ties to nodes currently in k, so a
        node that may move into k sees only its ties to k's members.
        """
        self.require_fitted()
        y = validate_adjacency(y_last, "last slice").astype(np.float64)
        labels = self.labels_for(t)
        if len(labels) != y.shape[0]:
            raise DataError(f"slice has {y.shape[0]} nodes, memberships have {len(labels)}")
        K = self.memberships.K
        if membership == "fixed":
            weights = np.eye(K)[labels - 1]
        elif membership == "expected":
            weights = self.transition_matrix.B[labels - 1]
        else:
            raise DataError(f"unknown membership mode '{membership}'")
        proba = np.zeros_like(y)
        same = np.zeros_like(y)
        for k in range(K):
            pair = np.outer(weights[:, k], weights[:, k])
            if not pair.any():
                continue
            # cluster k's statistics only see ties to its current members
            members = labels == k + 1
            inside = np.outer(members, members)
            stats = change_stats_matrix(self.spec, y * inside, y)
            entering = np.argwhere(np.triu(pair > 0, k=1) & ~inside)
            if len(entering):
                y_members = y * members[None, :]
                for i, j in entering:
                    stats[i, j] = stats[j, i] = change_stats(self.spec, y_members, y, i, j)
            within = expit(stats @ self.thetas[k])
            proba += pair * within
            same += pair
        proba += (1.0 - same) * self.p_between
        np.fill_diagonal(proba, 0.0)
        return proba

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.kind,
            "K": self.memberships.K,
            "spec": list(self.spec.names),
            "thetas": self.thetas.tolist(),
            "transition_matrix": self.transition_matrix.to_list(),
            "p_between": self.p_between,
            "m_attach": self.m_attach,
            "sweeps": self.sweeps,
            "memberships": self.memberships.labels.tolist(),
            "clusters": [f.to_dict() if f is not None else None for f in self.fits],
            "stage_one": self.stage_one,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ThergmBundle":
        try:
            return cls(spec=StatisticSpec.parse(data["spec"]), thetas=data["thetas"],
                       transition_matrix=TransitionMatrix(np.asarray(data["transition_matrix"])),
                       p_between=float(data["p_between"]), memberships=_memberships_from(data),
                       m_attach=int(data.get("m_attach", 2)), sweeps=int(data.get("sweeps", 5)),
                       fits=[FitResult.from_dict(c) if c is not None else None
                             for c in data.get("clusters", [])],
                       stage_one=dict(data.get("stage_one", {})))
        except KeyError as exc:
            raise DataError(f"bundle is missing field {exc}") from None


@register_bundle("dlsm")
@dataclass
class DlsmBundle(ModelBundle):
    positions: np.ndarray          # (T+1, n, d)
    beta0: float
    beta1: float
    memberships: MembershipSeries
    mu: np.ndarray                 # (K, d)
    sigma2: np.ndarray             # (K,)
    rho: float = 0.8
    transition: Optional[np.ndarray] = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=np.float64))
        self.sigma2 = np.asarray(self.sigma2, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[:2] != self.memberships.labels.T.shape:
            raise DataError(f"positions shape {self.positions.shape} does not match memberships "
                            f"{self.memberships.labels.shape}")

    @property
    def is_fitted(self) -> bool:
        return self.positions is not None and self.memberships is not None

    def _forecast(self, t_from: Optional[int] = None) -> np.ndarray:
        """Expected positions one step after ``t_from`` (the last fitted time when None)."""
        labels = self.labels_for(t_from)
        last = self.positions[self.memberships.T if t_from is None else t_from]
        return self.rho * last + (1.0 - self.rho) * self.mu[labels - 1]

    def _proba(self, Z: np.ndarray) -> np.ndarray:
        proba = expit(self.beta0 - self.beta1 * squareform(pdist(Z)))
        np.fill_diagonal(proba, 0.0)
        return proba

    def simulate_next(self, y_prev, rng, t=None):
        self.require_fitted()
        if t is None:
            labels = self.labels_for(None)
            Z = self._forecast()
            Z = Z + rng.standard_normal(Z.shape) * np.sqrt(self.sigma2[labels - 1])[:, None]
        else:
            self.labels_for(t)
            Z = self.positions[t]
        n = Z.shape[0]
        iu, ju = np.triu_indices(n, k=1)
        draws = rng.random(iu.size) < self._proba(Z)[iu, ju]
        y = np.zeros((n, n), dtype=np.uint8)
        y[iu[draws], ju[draws]] = 1
        y[ju[draws], iu[draws]] = 1
        return y

    def predict_proba(self, y_last, t=None, membership="fixed"):
        self.require_fitted()
        if np.shape(y_last)[0] != self.positions.shape[1]:
            raise DataError(f"slice has {np.shape(y_last)[0]} nodes, positions have {self.positions.shape[1]}")
        return self._proba(self._forecast(t))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.kind,
            "K": self.memberships.K,
            "positions": self.positions.tolist(),
            "beta0": self.beta0,
            "beta1": self.beta1,
            "mu": self.mu.tolist(),
            "sigma2": self.sigma2.tolist(),
            "rho": self.rho,
            "transition": None if self.transition is None else np.asarray(self.transition).tolist(),
            "memberships": self.memberships.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DlsmBundle":
        try:
            return cls(positions=data["positions"], beta0=float(data["beta0"]), beta1=float(data["beta1"]),
                       memberships=_memberships_from(data), mu=data["mu"], sigma2=data["sigma2"],
                       rho=float(data.get("rho", 0.8)),
                       transition=None if data.get("transition") is None else np.asarray(data["transition"]))
        except KeyError as exc:
            raise DataError(f"bundle is missing field {exc}") from None


def fit_thergm_bundle(net: DynamicNetwork, m: MembershipSeries, spec: StatisticSpec,
                      settings: Optional[McmcMleSettings] = None, method: str = "mcmc",
                      pooled: bool = False, workers: int = 1, m_attach: int = 2, sweeps: int = 5,
                      stage_one: Optional[Dict[str, Any]] = None) -> ThergmBundle:
    """Stage two: per-cluster TERGM fits plus the transition and between-density estimates."""
    spec = StatisticSpec.parse(spec)
    fits = pooled_cluster_fit(spec, net, m, settings, pooled=pooled, method=method,
                              workers=workers, skip_small=True)
    warnings: List[str] = []
    B_hat = estimate_transition(m, warnings)
    stage_one = dict(stage_one or {})
    if warnings:
        stage_one["transition_warnings"] = warnings
    return ThergmBundle.from_fits(spec, fits, B_hat, estimate_between_density(net, m), m,
                                  m_attach=m_attach, sweeps=sweeps, stage_one=stage_one)


__all__ = [
    "BUNDLE_REGISTRY",
    "DlsmBundle",
    "ModelBundle",
    "ThergmBundle",
    "fit_thergm_bundle",
    "load_bundle",
    "register_bundle",
]
