"""
THERGM Generator

Forward simulation of the hierarchical temporal ERGM. One step t-1 -> t:

    1. every node draws its new cluster from its row of the transition matrix;
    2. within each cluster the remaining nodes evolve by a TERGM transition,
       sampled with single-site Gibbs updates;
    3. nodes that joined a cluster attach preferentially to its incumbents;
    4. cross-cluster dyads are independent Bernoulli draws.

Each cluster and time step draws from its own derived random stream, so
the output depends only on the master seed.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logit

from ..models.network import ClusterView, DynamicNetwork, MembershipSeries
from ..models.results import SimulationOutput
from ..models.thergm_config import ThergmConfig, TransitionMatrix
from ..utils.seeding import derive_rng
from .statistics import StatisticSpec, temporal_stats
from .structure import build_cluster_view, degrees, edge_count

logger = logging.getLogger(__name__)


class GibbsWithinSampler:
    """
    Single-site Gibbs sampler for one TERGM transition y_prev -> y_t.

    Each update sets dyad (i, j) to 1 with probability
    logit^-1(theta' c_ij(y_t, y_prev)), where c_ij are the change statistics
    evaluated on the current state.
    """

    def __init__(self, spec: StatisticSpec, theta: Sequence[float], y_prev: np.ndarray,
                 rng: np.random.Generator):
        self.spec = spec
        self.theta = np.asarray(theta, dtype=np.float64)
        self.y_prev = np.asarray(y_prev, dtype=np.float64)
        self.rng = rng
        self._terms = spec.resolved()
        n = self.y_prev.shape[0]
        iu, ju = np.triu_indices(n, k=1)
        self._iu, self._ju = iu.tolist(), ju.tolist()

    @property
    def n_dyads(self) -> int:
        return len(self._iu)

    def sweep(self, y: np.ndarray) -> np.ndarray:
        """One pass over all dyads in random order; updates ``y`` (float array) in place."""
        order = self.rng.permutation(self.n_dyads)
        # u < expit(eta) exactly when logit(u) < eta
        thresholds = logit(self.rng.random(self.n_dyads))
        theta, terms, y_prev = self.theta.tolist(), self._terms, self.y_prev
        for threshold, d in zip(thresholds.tolist(), order.tolist()):
            i, j = self._iu[d], self._ju[d]
            eta = 0.0
            for coef, term in zip(theta, terms):
                eta += coef * term.change(y, y_prev, i, j)
            value = 1.0 if eta > threshold else 0.0
            y[i, j] = value
            y[j, i] = value
        return y

    def sample(self, y_start: np.ndarray, sweeps: int) -> np.ndarray:
        """Run ``sweeps`` full passes from ``y_start`` and return the final state."""
        y = np.array(y_start, dtype=np.float64)
        if self.n_dyads == 0:
            return y.astype(np.uint8)
        for _ in range(max(1, int(sweeps))):
            self.sweep(y)
        return y.astype(np.uint8)

    def sample_chain(self, y_start: np.ndarray, burn_in: int, n_samples: int, thin: int = 1,
                     keep: str = "stats") -> np.ndarray:
        """Retain ``n_samples`` states after ``burn_in`` sweeps, one every ``thin`` sweeps.

        ``keep="stats"`` returns an (n_samples, p) statistic matrix,
        ``keep="states"`` an (n_samples, n, n) stack of adjacencies.
        """
        y = np.array(y_start, dtype=np.float64)
        n = y.shape[0]
        if keep == "states":
            out = np.zeros((n_samples, n, n), dtype=np.uint8)
        else:
            out = np.zeros((n_samples, self.spec.p))
        if self.n_dyads == 0:
            return out
        for _ in range(burn_in):
            self.sweep(y)
        for s in range(n_samples):
            for _ in range(max(1, thin)):
                self.sweep(y)
            if keep == "states":
                out[s] = y
            else:
                out[s] = temporal_stats(self.spec, y, self.y_prev)
        return out


def init_state(cfg: ThergmConfig, rng: np.random.Generator,
               p_within: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Initial network and labels: blocks of the configured sizes with Bernoulli ties."""
    p_within = cfg.p_within_init if p_within is None else p_within
    labels = np.repeat(np.arange(1, cfg.K + 1), cfg.n_per_cluster)
    n = labels.size
    iu, ju = np.triu_indices(n, k=1)
    probs = np.where(labels[iu] == labels[ju], p_within, cfg.p_between)
    draws = rng.random(iu.size) < probs
    y = np.zeros((n, n), dtype=np.uint8)
    y[iu[draws], ju[draws]] = 1
    y[ju[draws], iu[draws]] = 1
    return y, labels


def step_membership(m_prev: np.ndarray, B, rng: np.random.Generator) -> np.ndarray:
    """Draw each node's next label independently from row m_prev(i) of B."""
    B = B.B if isinstance(B, TransitionMatrix) else np.asarray(B, dtype=np.float64)
    m_prev = np.asarray(m_prev, dtype=np.int64)
    cumulative = np.cumsum(B[m_prev - 1], axis=1)
    u = rng.random(m_prev.size)
    new = (u[:, None] >= cumulative).sum(axis=1) + 1
    return np.minimum(new, B.shape[0])


def attach_joiners(view: ClusterView, m_attach: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Preferential-attachment ties from joiners to the cluster's incumbents.

    Each joiner picks ``m_attach`` distinct incumbents with probability
    proportional to (incumbent degree inside the cluster at t-1) + 1, or
    connects to every incumbent when there are fewer than ``m_attach``.
    Returned pairs are (joiner, incumbent) in global node indices.
    """
    if len(view.joiners) == 0 or len(view.remain) == 0:
        return []
    weights = degrees(view.prev_adj).astype(np.float64) + 1.0
    weights /= weights.sum()
    size = min(int(m_attach), len(view.remain))
    edges: List[Tuple[int, int]] = []
    for joiner in view.joiners:
        if size == len(view.remain):
            targets = view.remain
        else:
            targets = rng.choice(view.remain, size=size, replace=False, p=weights)
        edges.extend((int(joiner), int(target)) for target in targets)
    return edges


def gibbs_within(view: ClusterView, spec: StatisticSpec, theta_k: Sequence[float], sweeps: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Sample the remain-set adjacency at t, starting from its state at t-1."""
    sampler = GibbsWithinSampler(spec, theta_k, view.prev_adj, rng)
    return sampler.sample(view.prev_adj, sweeps)


def sample_between(m_t: np.ndarray, p_between: float, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(p_between) ties on every cross-cluster dyad, as an (E, 2) array."""
    m_t = np.asarray(m_t)
    iu, ju = np.triu_indices(m_t.size, k=1)
    draws = rng.random(iu.size) < p_between
    keep = draws & (m_t[iu] != m_t[ju])
    return np.column_stack([iu[keep], ju[keep]])


def simulate_transition(y_prev: np.ndarray, labels_prev: np.ndarray, labels_curr: np.ndarray,
                        spec: StatisticSpec, thetas: np.ndarray, p_between: float, m_attach: int,
                        sweeps: int, seed: int, t: int, stream: str = "") -> Tuple[np.ndarray, Dict[str, Any]]:
    """One THERGM step given both memberships; returns the new slice and its trace entry."""
    n = len(labels_curr)
    K = np.asarray(thetas).shape[0]
    y_curr = np.zeros((n, n), dtype=np.uint8)
    clusters = []
    for k in range(1, K + 1):
        view = build_cluster_view(y_prev, y_prev, labels_prev, labels_curr, k, t)
        entry: Dict[str, Any] = {"cluster": k, "remain": int(view.size),
                                 "joiners": int(len(view.joiners)), "leavers": int(len(view.leavers))}
        if view.size >= 2:
            within = gibbs_within(view, spec, thetas[k - 1], sweeps,
                                  derive_rng(seed, stream + "gibbs", k, t))
            y_curr[np.ix_(view.remain, view.remain)] = within
            entry["stats"] = dict(zip(spec.names, temporal_stats(spec, within, view.prev_adj).tolist()))
        else:
            entry["stats"] = dict.fromkeys(spec.names, 0.0)
        attached = attach_joiners(view, m_attach, derive_rng(seed, stream + "attach", k, t))
        for i, j in attached:
            y_curr[i, j] = 1
            y_curr[j, i] = 1
        entry["attached"] = len(attached)
        clusters.append(entry)
    between = sample_between(labels_curr, p_between, derive_rng(seed, stream + "between", t))
    if len(between):
        y_curr[between[:, 0], between[:, 1]] = 1
        y_curr[between[:, 1], between[:, 0]] = 1
    return y_curr, {"t": t, "edges": edge_count(y_curr), "between_edges": int(len(between)),
                    "clusters": clusters}


def simulate(cfg: ThergmConfig, seed: Optional[int] = None) -> SimulationOutput:
    """Generate T+1 slices and the true memberships from the THERGM process."""
    seed = cfg.seed if seed is None else int(seed)
    logger.info(f"Simulating THERGM: K={cfg.K}, n={cfg.n}, T={cfg.T}, spec={cfg.spec}, seed={seed}")
    y, labels = init_state(cfg, derive_rng(seed, "init"))
    slices = [y]
    label_columns = [labels]
    trace = []
    for t in range(1, cfg.T + 1):
        labels_t = step_membership(label_columns[-1], cfg.B, derive_rng(seed, "membership", t))
        y, entry = simulate_transition(slices[-1], label_columns[-1], labels_t, cfg.spec, cfg.theta,
                                       cfg.p_between, cfg.m_attach, cfg.gibbs_sweeps, seed, t)
        movers = int((labels_t != label_columns[-1]).sum())
        entry["movers"] = movers
        logger.debug(f"t={t}: {entry['edges']} edges, {movers} movers")
        slices.append(y)
        label_columns.append(labels_t)
        trace.append(entry)
    net = DynamicNetwork.from_slices(slices)
    truth = MembershipSeries(np.column_stack(label_columns), cfg.K)
    return SimulationOutput(net=net, truth=truth, config=cfg.to_dict(), trace=trace)


__all__ = [
    "GibbsWithinSampler",
    "attach_joiners",
    "gibbs_within",
    "init_state",
    "sample_between",
    "simulate",
    "simulate_transition",
    "step_membership",
]
