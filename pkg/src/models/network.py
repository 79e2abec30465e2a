"""
Network Containers

This module contains the graph and membership containers shared by the
simulator, the estimators and the evaluation code.

Adjacency matrices are plain symmetric, hollow 0/1 numpy arrays. Node
positions inside the library are 0-based indices; ``node_ids`` maps them
to external identifiers. Cluster labels are 1..K.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError


def validate_adjacency(y: np.ndarray, name: str = "adjacency") -> np.ndarray:
    """Check that ``y`` is a symmetric, hollow, binary square matrix.

    Returns the matrix as ``uint8``.
    """
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[0] != y.shape[1]:
        raise DataError(f"{name} must be square, got shape {y.shape}")
    if y.size and not np.isin(y, (0, 1)).all():
        raise DataError(f"{name} entries must be 0 or 1")
    if not np.array_equal(y, y.T):
        raise DataError(f"{name} must be symmetric")
    if np.any(np.diag(y) != 0):
        raise DataError(f"{name} must have a zero diagonal")
    return y.astype(np.uint8, copy=False)


def empty_graph(n: int) -> np.ndarray:
    return np.zeros((n, n), dtype=np.uint8)


def complete_graph(n: int) -> np.ndarray:
    y = np.ones((n, n), dtype=np.uint8)
    np.fill_diagonal(y, 0)
    return y


def from_edges(n: int, edges: Sequence[Tuple[int, int]]) -> np.ndarray:
    """Build an adjacency matrix from 0-based undirected edges."""
    y = empty_graph(n)
    for i, j in edges:
        if i == j:
            continue
        y[i, j] = 1
        y[j, i] = 1
    return y


@dataclass(frozen=True)
class DynamicNetwork:
    """An ordered series of undirected binary networks over a fixed node set."""

    slices: Tuple[np.ndarray, ...]
    node_ids: Tuple[Any, ...] = ()

    def __post_init__(self):
        if not self.slices:
            raise DataError("a dynamic network needs at least one slice")
        checked = tuple(validate_adjacency(y, f"slice {t}").copy() for t, y in enumerate(self.slices))
        n = checked[0].shape[0]
        for t, y in enumerate(checked):
            if y.shape[0] != n:
                raise DataError(f"slice {t} has {y.shape[0]} nodes, expected {n}")
            y.setflags(write=False)
        object.__setattr__(self, "slices", checked)
        if not self.node_ids:
            object.__setattr__(self, "node_ids", tuple(range(n)))
        elif len(self.node_ids) != n:
            raise DataError(f"{len(self.node_ids)} node ids for {n} nodes")

    @classmethod
    def from_slices(cls, slices: Sequence[np.ndarray],
                    node_ids: Optional[Sequence[Any]] = None) -> "DynamicNetwork":
        return cls(tuple(np.array(y, dtype=np.uint8) for y in slices),
                   tuple(node_ids) if node_ids is not None else ())

    @property
    def n(self) -> int:
        return self.slices[0].shape[0]

    @property
    def T(self) -> int:
        """Index of the last time point (slices are t = 0..T)."""
        return len(self.slices) - 1

    def __len__(self) -> int:
        return len(self.slices)

    def slice(self, t: int) -> np.ndarray:
        return self.slices[t]

    def require_temporal(self):
        if len(self.slices) < 2:
            raise DataError("temporal operations need at least two slices")


@dataclass(frozen=True)
class MembershipSeries:
    """Per-node, per-time cluster labels in 1..K (shape n × (T+1))."""

    labels: np.ndarray
    K: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 2:
            raise DataError(f"membership labels must be n x (T+1), got shape {labels.shape}")
        if self.K < 1:
            raise DataError("K must be at least 1")
        if labels.size and (labels.min() < 1 or labels.max() > self.K):
            raise DataError(f"membership labels must lie in 1..{self.K}")
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def constant(cls, labels: Sequence[int], n_times: int, K: int) -> "MembershipSeries":
        col = np.asarray(labels, dtype=np.int64)[:, None]
        return cls(np.repeat(col, n_times, axis=1), K)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def T(self) -> int:
        return self.labels.shape[1] - 1

    def at(self, t: int) -> np.ndarray:
        return self.labels[:, t]

    def sizes(self, t: int) -> np.ndarray:
        """Cluster sizes at time t, indexed 0..K-1 for labels 1..K."""
        return np.bincount(self.at(t) - 1, minlength=self.K)

    def relabel(self, perm: np.ndarray) -> "MembershipSeries":
        """Apply ``perm`` (perm[h-1] is the new label of label h) to every time point."""
        perm = np.asarray(perm, dtype=np.int64)
        return MembershipSeries(perm[self.labels - 1], self.K)

    def check_matches(self, net: DynamicNetwork):
        if self.n != net.n or self.labels.shape[1] != len(net):
            raise DataError(
                f"membership shape {self.labels.shape} does not match network "
                f"({net.n} nodes, {len(net)} slices)")


@dataclass
class ClusterView:
    """One cluster's view of a transition t-1 -> t.

    ``remain`` holds nodes in the cluster at both times, ``joiners`` nodes
    that entered it at t. The adjacencies are restricted to ``remain``.
    """

    cluster: int
    remain: np.ndarray
    joiners: np.ndarray
    prev_adj: np.ndarray
    curr_adj: np.ndarray
    t: int = 0
    leavers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def size(self) -> int:
        return len(self.remain)
