"""Network statistics, change statistics & term registry.

A model specification is an ordered list of registered terms. Each term
knows how to compute its statistic S(y_t, y_prev) for a stack of graphs at
once and how its value changes when one dyad of y_t is toggled from 0 to 1.

Adding a statistic means registering one more ``Term``:

    @register_term("name")
    def _name_term() -> Term: ...
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Sequence, Tuple, Union

import numpy as np

from ..models.errors import DataError

BatchStat = Callable[[np.ndarray, np.ndarray], np.ndarray]
DyadChange = Callable[[np.ndarray, np.ndarray, int, int], float]
ChangeMatrix = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Term:
    """One sufficient statistic and its change rules."""
    name: str
    batch: BatchStat            # (m, n, n) graphs, (n, n) y_prev -> (m,)
    change: DyadChange          # change of S for toggling (i, j) on in y_t
    change_matrix: ChangeMatrix  # all dyads at once -> (n, n)
    dyadic_independent: bool = True


TERM_REGISTRY: Dict[str, Term] = {}


def register_term(name: str) -> Callable[[Callable[[], Term]], Callable[[], Term]]:
    def _decorator(factory: Callable[[], Term]) -> Callable[[], Term]:
        TERM_REGISTRY[name] = factory()
        return factory
    return _decorator


def get_term(name: str) -> Term:
    try:
        return TERM_REGISTRY[name]
    except KeyError:
        raise DataError(f"unknown statistic '{name}'; known: {sorted(TERM_REGISTRY)}") from None


def _hollow(a: np.ndarray) -> np.ndarray:
    np.fill_diagonal(a, 0.0)
    return a


@register_term("edges")
def _edges_term() -> Term:
    return Term(
        name="edges",
        batch=lambda Y, y_prev: Y.sum(axis=(1, 2)) / 2.0,
        change=lambda y, y_prev, i, j: 1.0,
        change_matrix=lambda y, y_prev: _hollow(np.ones(y.shape, dtype=np.float64)),
    )


@register_term("triangles")
def _triangles_term() -> Term:
    def change(y, y_prev, i, j):
        # common neighbours; y[i, i] = y[j, j] = 0 so the dyad itself never counts
        return float(np.count_nonzero(np.logical_and(y[i], y[j])))

    def change_matrix(y, y_prev):
        a = y.astype(np.float64)
        return _hollow(a @ a)

    return Term(
        name="triangles",
        batch=lambda Y, y_prev: np.einsum("aij,ajk,aki->a", Y, Y, Y) / 6.0,
        change=change,
        change_matrix=change_matrix,
        dyadic_independent=False,
    )


@register_term("stability")
def _stability_term() -> Term:
    def batch(Y, y_prev):
        n = Y.shape[1]
        same = (Y == y_prev[None, :, :]).sum(axis=(1, 2))
        return (same - n) / 2.0

    return Term(
        name="stability",
        batch=batch,
        change=lambda y, y_prev, i, j: 2.0 * float(y_prev[i, j]) - 1.0,
        change_matrix=lambda y, y_prev: _hollow(2.0 * y_prev.astype(np.float64) - 1.0),
    )


@dataclass(frozen=True)
class StatisticSpec:
    """Ordered list of term names; the order fixes coefficient indexing."""
    terms: Tuple[str, ...]

    def __post_init__(self):
        terms = tuple(str(t).strip().lower() for t in self.terms)
        if not terms:
            raise DataError("a statistic specification needs at least one term")
        if len(set(terms)) != len(terms):
            raise DataError(f"duplicate terms in specification: {list(terms)}")
        for t in terms:
            get_term(t)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def parse(cls, value: Union[str, Iterable[str], "StatisticSpec"]) -> "StatisticSpec":
        """Build a spec from ``"edges,triangles"`` or a list of names."""
        if isinstance(value, StatisticSpec):
            return value
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        return cls(tuple(value))

    @property
    def p(self) -> int:
        return len(self.terms)

    @property
    def names(self) -> Tuple[str, ...]:
        return self.terms

    @property
    def dyadic_independent(self) -> bool:
        return all(get_term(t).dyadic_independent for t in self.terms)

    def index(self, term: str) -> int:
        return self.terms.index(term)

    def resolved(self) -> Tuple[Term, ...]:
        return tuple(get_term(t) for t in self.terms)

    def __str__(self) -> str:
        return ",".join(self.terms)


def _check_pair(y_t: np.ndarray, y_prev: np.ndarray):
    if np.shape(y_t) != np.shape(y_prev):
        raise DataError(f"dimension mismatch: {np.shape(y_t)} vs {np.shape(y_prev)}")


def batch_stats(spec: StatisticSpec, graphs: np.ndarray, y_prev: np.ndarray) -> np.ndarray:
    """Statistics of a stack of graphs (m, n, n) against one y_prev -> (m, p)."""
    Y = np.asarray(graphs, dtype=np.float64)
    prev = np.asarray(y_prev, dtype=np.float64)
    if Y.shape[1:] != prev.shape:
        raise DataError(f"dimension mismatch: {Y.shape[1:]} vs {prev.shape}")
    return np.column_stack([term.batch(Y, prev) for term in spec.resolved()])


def temporal_stats(spec: StatisticSpec, y_t: np.ndarray, y_prev: np.ndarray) -> np.ndarray:
    """S(y_t, y_prev) as a length-p vector."""
    _check_pair(y_t, y_prev)
    return batch_stats(spec, np.asarray(y_t)[None, :, :], y_prev)[0]


def change_stats(spec: StatisticSpec, y_t: np.ndarray, y_prev: np.ndarray,
                 i: int, j: int) -> np.ndarray:
    """S with tie (i, j) present minus S with it absent."""
    _check_pair(y_t, y_prev)
    if i == j:
        raise DataError("change statistics need two distinct nodes")
    return np.array([term.change(y_t, y_prev, i, j) for term in spec.resolved()])


def change_stats_matrix(spec: StatisticSpec, y_t: np.ndarray, y_prev: np.ndarray) -> np.ndarray:
    """Change statistics of every dyad at once, shape (n, n, p), zero diagonal."""
    _check_pair(y_t, y_prev)
    y = np.asarray(y_t)
    prev = np.asarray(y_prev)
    return np.stack([term.change_matrix(y, prev) for term in spec.resolved()], axis=-1)


def conditional_logit(spec: StatisticSpec, theta: Sequence[float], y_t: np.ndarray,
                      y_prev: np.ndarray, i: int, j: int) -> float:
    """Log-odds of Y_ij = 1 given the rest of y_t and y_prev: theta' c_ij."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.p,):
        raise DataError(f"theta has length {theta.size}, specification has {spec.p} terms")
    return float(theta @ change_stats(spec, y_t, y_prev, i, j))


__all__ = [
    "StatisticSpec",
    "TERM_REGISTRY",
    "Term",
    "batch_stats",
    "change_stats",
    "change_stats_matrix",
    "conditional_logit",
    "get_term",
    "register_term",
    "temporal_stats",
]
