"""
THERGM Configuration Model

This module contains the generative-model configuration: the membership
transition matrix, per-cluster TERGM coefficients and the scenario presets
used by the batch experiments.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logit

from .errors import ConfigError
from ..business.statistics import StatisticSpec

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TransitionMatrix:
    """K × K row-stochastic matrix of per-step membership change probabilities."""
    B: np.ndarray

    def __post_init__(self):
        B = np.array(self.B, dtype=np.float64)
        if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] < 1:
            raise ConfigError(f"transition matrix must be square, got shape {B.shape}")
        if np.any(B < 0) or np.any(B > 1):
            raise ConfigError("transition probabilities must lie in [0, 1]")
        if np.any(np.abs(B.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE):
            raise ConfigError(f"transition matrix rows must sum to 1, got {B.sum(axis=1)}")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @classmethod
    def identity(cls, K: int) -> "TransitionMatrix":
        return cls(np.eye(K))

    @classmethod
    def sticky(cls, K: int, stay: float) -> "TransitionMatrix":
        """``stay`` on the diagonal, the rest spread evenly over the other clusters."""
        if K == 1:
            return cls.identity(1)
        B = np.full((K, K), (1.0 - stay) / (K - 1))
        np.fill_diagonal(B, stay)
        # absorb rounding so rows meet the tolerance exactly
        B[np.diag_indices(K)] += 1.0 - B.sum(axis=1)
        return cls(B)

    @property
    def K(self) -> int:
        return self.B.shape[0]

    def to_list(self) -> List[List[float]]:
        return self.B.tolist()


def calibrate_edges_stability(density: float = 0.1, dissolution: float = 0.1) -> Tuple[float, float]:
    """Coefficients (edges, stability) of a dyad-independent transition model.

    An existing tie drops with probability ``dissolution`` per step (mean
    duration 1/dissolution steps) and the stationary density is ``density``.
    """
    if not 0 < density < 1 or not 0 < dissolution < 1:
        raise ConfigError("density and dissolution must lie strictly between 0 and 1")
    formation = density * dissolution / (1.0 - density)
    if formation >= 1:
        raise ConfigError("density too high for the requested dissolution rate")
    keep_logit = float(logit(1.0 - dissolution))   # theta_e + theta_s
    form_logit = float(logit(formation))           # theta_e - theta_s
    return 0.5 * (keep_logit + form_logit), 0.5 * (keep_logit - form_logit)


@dataclass
class ThergmConfig:
    """Parameters of the THERGM generative process."""
    K: int = 3
    n_per_cluster: Tuple[int, ...] = (30, 30, 30)
    T: int = 4
    spec: StatisticSpec = field(default_factory=lambda: StatisticSpec(("edges", "triangles", "stability")))
    theta: np.ndarray = None
    B: TransitionMatrix = None
    p_between: float = 0.01
    p_within_init: float = 0.1
    m_attach: int = 2
    gibbs_sweeps: int = 5
    seed: int = 0

    def __post_init__(self):
        self.spec = StatisticSpec.parse(self.spec)
        if isinstance(self.n_per_cluster, int):
            self.n_per_cluster = (self.n_per_cluster,) * self.K
        self.n_per_cluster = tuple(int(v) for v in self.n_per_cluster)
        if self.theta is None:
            self.theta = np.tile(default_theta(self.spec), (self.K, 1))
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.float64))
        if self.theta.shape[0] == 1 and self.K > 1:
            self.theta = np.tile(self.theta, (self.K, 1))
        if self.B is None:
            self.B = TransitionMatrix.sticky(self.K, 0.95)
        elif not isinstance(self.B, TransitionMatrix):
            self.B = TransitionMatrix(np.asarray(self.B))
        self.validate()

    @property
    def n(self) -> int:
        return int(sum(self.n_per_cluster))

    def validate(self):
        if self.K < 1:
            raise ConfigError("Clusters must be at least 1")
        if len(self.n_per_cluster) != self.K:
            raise ConfigError(f"NodesPerCluster has {len(self.n_per_cluster)} entries for {self.K} clusters")
        if any(v < 1 for v in self.n_per_cluster):
            raise ConfigError("every cluster needs at least one node")
        if self.T < 1:
            raise ConfigError("TimeSteps must be at least 1")
        if self.theta.shape != (self.K, self.spec.p):
            raise ConfigError(f"Theta must be {self.K} x {self.spec.p}, got {self.theta.shape}")
        if self.B.K != self.K:
            raise ConfigError(f"transition matrix is {self.B.K} x {self.B.K}, expected {self.K}")
        if not 0 <= self.p_within_init <= 1:
            raise ConfigError("PWithinInit must lie in [0, 1]")
        if not 0 <= self.p_between < 1:
            raise ConfigError("PBetween must lie in [0, 1)")
        if self.K > 1 and self.p_between >= self.p_within_init:
            raise ConfigError("PBetween must be below the within-cluster density PWithinInit")
        if self.m_attach < 1:
            raise ConfigError("AttachEdges must be at least 1")
        if self.gibbs_sweeps < 1:
            raise ConfigError("GibbsSweeps must be at least 1")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "K": self.K,
            "n_per_cluster": list(self.n_per_cluster),
            "T": self.T,
            "spec": list(self.spec.names),
            "theta": self.theta.tolist(),
            "B": self.B.to_list(),
            "p_between": self.p_between,
            "p_within_init": self.p_within_init,
            "m_attach": self.m_attach,
            "gibbs_sweeps": self.gibbs_sweeps,
            "seed": self.seed,
        }


def default_theta(spec: StatisticSpec, density: float = 0.1, dissolution: float = 0.1,
                  triangles: float = 0.1) -> np.ndarray:
    """Coefficients keeping density near ``density`` with a 10-step mean tie duration."""
    edges, stability = calibrate_edges_stability(density, dissolution)
    if "stability" not in spec.terms:
        edges = float(logit(density))
    values = {"edges": edges, "stability": stability, "triangles": triangles}
    return np.array([values.get(term, 0.0) for term in spec.terms])


@dataclass(frozen=True)
class ScenarioPreset:
    """One cell of the transition-speed × density-gap grid."""
    name: str
    stay: float
    p_within: float
    p_between: float
    triangles: float = 0.1

    def build_config(self, K: int = 3, n_per_cluster: int = 30, T: int = 4, seed: int = 0,
                     spec: Optional[Sequence[str]] = None, **overrides) -> ThergmConfig:
        spec = StatisticSpec.parse(spec or ("edges", "triangles", "stability"))
        theta = default_theta(spec, density=self.p_within, triangles=self.triangles)
        params = dict(K=K, n_per_cluster=(n_per_cluster,) * K, T=T, spec=spec,
                      theta=np.tile(theta, (K, 1)), B=TransitionMatrix.sticky(K, self.stay),
                      p_between=self.p_between, p_within_init=self.p_within, seed=seed)
        params.update(overrides)
        return ThergmConfig(**params)


SCENARIO_PRESETS: Dict[str, ScenarioPreset] = {
    "slow-easy": ScenarioPreset("slow-easy", stay=0.95, p_within=0.15, p_between=0.01),
    "slow-hard": ScenarioPreset("slow-hard", stay=0.95, p_within=0.10, p_between=0.04),
    "quick-easy": ScenarioPreset("quick-easy", stay=0.80, p_within=0.15, p_between=0.01),
    "quick-hard": ScenarioPreset("quick-hard", stay=0.80, p_within=0.10, p_between=0.04),
}


def get_preset(name: str) -> ScenarioPreset:
    try:
        return SCENARIO_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset '{name}'; known: {sorted(SCENARIO_PRESETS)}") from None
