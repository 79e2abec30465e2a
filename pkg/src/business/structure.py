"""
Structural Computations

Deterministic graph summaries (degrees, triangles, geodesics), subgraph
restriction and the per-cluster transition views every other module is
built on.
"""

import logging
from typing import Dict, List, Sequence, Union

import numpy as np
from scipy.sparse.csgraph import shortest_path

from ..models.errors import DataError
from ..models.network import ClusterView, DynamicNetwork, MembershipSeries

logger = logging.getLogger(__name__)

UNREACHABLE = "unreachable"


def degrees(y: np.ndarray) -> np.ndarray:
    """Row sums of the adjacency matrix."""
    return np.asarray(y, dtype=np.int64).sum(axis=1)


def edge_count(y: np.ndarray) -> int:
    return int(np.asarray(y, dtype=np.int64).sum() // 2)


def triangle_count(y: np.ndarray) -> int:
    """Number of unordered node triples with all three ties present."""
    a = np.asarray(y, dtype=np.int64)
    return int(np.trace(a @ a @ a) // 6)


def geodesic_distances(y: np.ndarray) -> np.ndarray:
    """All-pairs hop distances by breadth-first search (``inf`` when unreachable)."""
    y = np.asarray(y)
    if y.shape[0] == 0:
        return np.zeros((0, 0))
    return shortest_path(y.astype(np.float64), method="D", directed=False, unweighted=True)


def geodesic_histogram(y: np.ndarray) -> Dict[Union[int, str], int]:
    """Counts of unordered pairs by geodesic distance, plus an unreachable bin.

    Bins always sum to C(n, 2).
    """
    n = np.asarray(y).shape[0]
    hist: Dict[Union[int, str], int] = {}
    if n < 2:
        return hist
    dist = geodesic_distances(y)[np.triu_indices(n, k=1)]
    finite = np.isfinite(dist)
    values, counts = np.unique(dist[finite].astype(np.int64), return_counts=True)
    for d, c in zip(values, counts):
        hist[int(d)] = int(c)
    n_unreachable = int((~finite).sum())
    if n_unreachable:
        hist[UNREACHABLE] = n_unreachable
    return hist


def subgraph(y: np.ndarray, nodes: Sequence[int]) -> np.ndarray:
    """Restriction of ``y`` to ``nodes`` (0-based), preserving their order."""
    idx = np.asarray(nodes, dtype=np.int64)
    if idx.size == 0:
        raise DataError("subgraph needs a nonempty node set")
    n = np.asarray(y).shape[0]
    if idx.min() < 0 or idx.max() >= n:
        raise DataError(f"subgraph nodes must lie in 0..{n - 1}")
    return np.asarray(y)[np.ix_(idx, idx)]


def build_cluster_view(y_prev: np.ndarray, y_curr: np.ndarray, labels_prev: np.ndarray,
                       labels_curr: np.ndarray, k: int, t: int = 0) -> ClusterView:
    """Assemble the view of cluster ``k`` for the transition ``labels_prev -> labels_curr``."""
    in_prev = labels_prev == k
    in_curr = labels_curr == k
    remain = np.flatnonzero(in_prev & in_curr)
    joiners = np.flatnonzero(in_curr & ~in_prev)
    leavers = np.flatnonzero(in_prev & ~in_curr)
    if remain.size:
        prev_adj = subgraph(y_prev, remain)
        curr_adj = subgraph(y_curr, remain)
    else:
        prev_adj = np.zeros((0, 0), dtype=np.uint8)
        curr_adj = np.zeros((0, 0), dtype=np.uint8)
    return ClusterView(cluster=k, remain=remain, joiners=joiners, prev_adj=prev_adj,
                       curr_adj=curr_adj, t=t, leavers=leavers)


def cluster_views(net: DynamicNetwork, m: MembershipSeries, t: int) -> List[ClusterView]:
    """One ClusterView per cluster label for the transition t-1 -> t."""
    m.check_matches(net)
    if t < 1 or t > net.T:
        raise DataError(f"time {t} out of range 1..{net.T}")
    views = [build_cluster_view(net.slice(t - 1), net.slice(t), m.at(t - 1), m.at(t), k, t)
             for k in range(1, m.K + 1)]
    logger.debug(f"t={t}: remain sizes {[v.size for v in views]}, "
                 f"joiners {[len(v.joiners) for v in views]}")
    return views


__all__ = [
    "UNREACHABLE",
    "build_cluster_view",
    "cluster_views",
    "degrees",
    "edge_count",
    "geodesic_distances",
    "geodesic_histogram",
    "subgraph",
    "triangle_count",
]
