"""
Dynamic SBM Baseline

Comparison clustering method: regularized spectral clustering of every
slice, optional smoothing of consecutive embeddings, and alignment of each
slice's labels to the previous slice by Hamming-minimizing permutation.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import eigh, orthogonal_procrustes
from scipy.sparse.csgraph import connected_components
from sklearn.cluster import KMeans

from ..models.errors import ConfigError, DataError
from ..models.network import DynamicNetwork, MembershipSeries
from ..utils.seeding import derive_seed
from .clustering_interface import ClusteringModel, ClusteringResult
from .evaluation import align_labels, apply_permutation

logger = logging.getLogger(__name__)

LOW_CONFIDENCE_GAP = 0.05


@dataclass(frozen=True)
class SpectralSettings:
    """K, degree regularization (None = mean degree), embedding smoothing and seed."""
    K: int = 3
    tau: Optional[float] = None
    smoothing: float = 0.0
    seed: int = 0
    n_init: int = 20

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("Clusters must be at least 1")
        if self.tau is not None and self.tau < 0:
            raise ConfigError(f"SpectralTau must be nonnegative, got {self.tau}")
        if not 0.0 <= self.smoothing <= 1.0:
            raise ConfigError(f"SpectralSmoothing must lie in [0, 1], got {self.smoothing}")


@dataclass
class SliceClustering:
    """Spectral labels of one slice with the quality flags behind them."""
    labels: np.ndarray
    eigengap: float
    low_confidence: bool
    embedding: np.ndarray
    warnings: List[str] = field(default_factory=list)


def spectral_embedding(y_t: np.ndarray, K: int, tau: Optional[float] = None) -> Tuple[np.ndarray, float]:
    """Row-normalized top-K eigenvectors of the regularized normalized adjacency, and the eigengap.

    The adjacency is regularized as A + (tau / n) J, tau defaulting to the
    mean degree.
    """
    A = np.asarray(y_t, dtype=np.float64)
    n = A.shape[0]
    if tau is None:
        tau = float(A.sum() / n) if n else 0.0
    A_tau = A + tau / n
    deg = A_tau.sum(axis=1)
    inv_sqrt = np.zeros(n)
    inv_sqrt[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    L = inv_sqrt[:, None] * A_tau * inv_sqrt[None, :]
    values, vectors = eigh(L)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    U = vectors[:, :K]
    eigengap = float(values[K - 1] - values[K]) if K < n else float("inf")
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    U = np.divide(U, norms, out=np.zeros_like(U), where=norms > 0)
    return U, eigengap


def _kmeans(U: np.ndarray, settings: SpectralSettings, t: int) -> np.ndarray:
    model = KMeans(n_clusters=settings.K, n_init=settings.n_init,
                   random_state=derive_seed(settings.seed, "kmeans", t))
    return model.fit_predict(U).astype(np.int64) + 1


def spectral_slice(y_t: np.ndarray, settings: SpectralSettings, t: int = 0,
                   embedding: Optional[np.ndarray] = None) -> SliceClustering:
    """Cluster one slice; ``embedding`` replaces the slice's own embedding when given."""
    n = np.shape(y_t)[0]
    if n < settings.K:
        raise DataError(f"K={settings.K} exceeds the number of nodes n={n}")
    U, gap = spectral_embedding(y_t, settings.K, settings.tau)
    if embedding is not None:
        U = embedding
    labels = _kmeans(U, settings, t)
    result = SliceClustering(labels=labels, eigengap=gap, low_confidence=gap < LOW_CONFIDENCE_GAP,
                             embedding=U)
    if result.low_confidence:
        result.warnings.append(f"t={t}: eigengap {gap:.3g} below {LOW_CONFIDENCE_GAP}, labels are low confidence")
    n_components = connected_components(np.asarray(y_t), directed=False)[0]
    if n_components > settings.K:
        result.warnings.append(f"t={t}: {n_components} connected components for K={settings.K}")
    for message in result.warnings:
        logger.warning(message)
    return result


def _fit_slices(net: DynamicNetwork, settings: SpectralSettings) -> Tuple[MembershipSeries, List[SliceClustering]]:
    slices: List[SliceClustering] = []
    smoothed = None
    for t in range(len(net)):
        y_t = net.slice(t)
        if settings.smoothing > 0:
            U, _ = spectral_embedding(y_t, settings.K, settings.tau)
            if smoothed is not None:
                R, _ = orthogonal_procrustes(U, smoothed)
                U = (1.0 - settings.smoothing) * (U @ R) + settings.smoothing * smoothed
                norms = np.linalg.norm(U, axis=1, keepdims=True)
                U = np.divide(U, norms, out=np.zeros_like(U), where=norms > 0)
            smoothed = U
            slices.append(spectral_slice(y_t, settings, t, embedding=U))
        else:
            slices.append(spectral_slice(y_t, settings, t))
    columns = [slices[0].labels]
    for result in slices[1:]:
        perm = align_labels(result.labels, columns[-1], settings.K)
        columns.append(apply_permutation(result.labels, perm))
    return MembershipSeries(np.column_stack(columns), settings.K), slices


def fit_dsbm(net: DynamicNetwork, settings: SpectralSettings) -> MembershipSeries:
    """Per-slice spectral labels, each slice aligned to the previous one."""
    return _fit_slices(net, settings)[0]


class DynamicSBMBaseline(ClusteringModel):
    """Spectral dynamic SBM baseline behind the common clustering interface."""

    name = "dsbm"

    def __init__(self, settings: SpectralSettings):
        super().__init__(settings.K)
        self.settings = settings

    def fit(self, net: DynamicNetwork) -> ClusteringResult:
        self.check_input(net)
        self.logger.info(f"DSBM baseline: K={self.K}, tau={self.settings.tau}, "
                         f"smoothing={self.settings.smoothing}, {len(net)} slices")
        memberships, slices = _fit_slices(net, self.settings)
        result = ClusteringResult(memberships=memberships, model=self.name, diagnostics={
            "eigengaps": [s.eigengap for s in slices],
            "low_confidence": [bool(s.low_confidence) for s in slices],
            "settings": {"K": self.K, "tau": self.settings.tau, "smoothing": self.settings.smoothing,
                         "seed": self.settings.seed},
        })
        for s in slices:
            for message in s.warnings:
                result.add_warning(message)
        self.result_ = result
        return result


__all__ = [
    "DynamicSBMBaseline",
    "SliceClustering",
    "SpectralSettings",
    "fit_dsbm",
    "spectral_embedding",
    "spectral_slice",
]
