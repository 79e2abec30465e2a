"""
Evaluation Metrics

Label alignment and mis-clustering rates, the membership transition
estimate behind river plots, degree/geodesic goodness of fit, one-step
link prediction and its AUC, and the label corruption used by the
sensitivity experiments.
"""

import logging
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import roc_auc_score

from ..models.errors import DataError
from ..models.network import DynamicNetwork, MembershipSeries, validate_adjacency
from ..models.results import MisclusteringReport
from ..models.thergm_config import TransitionMatrix
from ..utils.seeding import derive_rng
from .structure import UNREACHABLE, degrees, geodesic_histogram

logger = logging.getLogger(__name__)

GOF_STATISTICS = ("degree", "geodesic")
QUANTILES = (0.05, 0.5, 0.95)


def confusion(m_hat: np.ndarray, m_ref: np.ndarray, K: int) -> np.ndarray:
    """K × K counts C[h-1, k-1] of nodes labelled h in ``m_hat`` and k in ``m_ref``."""
    m_hat = np.asarray(m_hat, dtype=np.int64).ravel()
    m_ref = np.asarray(m_ref, dtype=np.int64).ravel()
    if m_hat.shape != m_ref.shape:
        raise DataError(f"label vectors differ in length: {m_hat.size} vs {m_ref.size}")
    return np.bincount((m_hat - 1) * K + (m_ref - 1), minlength=K * K).reshape(K, K)


def align_labels(m_hat: np.ndarray, m_ref: np.ndarray, K: int) -> np.ndarray:
    """Permutation minimizing the Hamming distance between relabelled ``m_hat`` and ``m_ref``.

    ``perm[h-1]`` is the label that ``h`` in ``m_hat`` should become.
    """
    C = confusion(m_hat, m_ref, K)
    rows, cols = linear_sum_assignment(C, maximize=True)
    perm = np.empty(K, dtype=np.int64)
    perm[rows] = cols + 1
    return perm


def apply_permutation(labels: np.ndarray, perm: np.ndarray) -> np.ndarray:
    return np.asarray(perm)[np.asarray(labels, dtype=np.int64) - 1]


def hamming_error(m_hat: np.ndarray, m_ref: np.ndarray, K: int) -> float:
    """Smallest fraction of disagreeing labels over all relabellings of ``m_hat``."""
    m_ref = np.asarray(m_ref)
    if m_ref.size == 0:
        return 0.0
    aligned = apply_permutation(m_hat, align_labels(m_hat, m_ref, K))
    return float(np.mean(aligned != m_ref.ravel()))


def misclustering(m_hat: MembershipSeries, m_true: MembershipSeries) -> MisclusteringReport:
    """Per-time mis-clustering after alignment to the truth.

    The chained rates align t=0 to the truth and every later slice to the
    aligned previous estimate, which is what a method resolving label
    switching between consecutive steps achieves.
    """
    if m_hat.K != m_true.K:
        raise DataError(f"cluster counts differ: estimate K={m_hat.K}, truth K={m_true.K}")
    if m_hat.labels.shape != m_true.labels.shape:
        raise DataError(f"membership shapes differ: {m_hat.labels.shape} vs {m_true.labels.shape}")
    K = m_true.K
    per_time, permutations, chained = [], [], []
    previous = None
    for t in range(m_true.labels.shape[1]):
        est, ref = m_hat.at(t), m_true.at(t)
        perm = align_labels(est, ref, K)
        permutations.append(perm)
        per_time.append(float(np.mean(apply_permutation(est, perm) != ref)))
        chain_perm = perm if previous is None else align_labels(est, previous, K)
        previous = apply_permutation(est, chain_perm)
        chained.append(float(np.mean(previous != ref)))
    report = MisclusteringReport(per_time=np.array(per_time), permutations=permutations,
                                 chained=np.array(chained))
    logger.debug(f"Mis-clustering per time: {np.round(report.per_time, 4).tolist()}")
    return report


def transition_counts(m: MembershipSeries) -> np.ndarray:
    """K × K counts of h -> k moves over all consecutive slice pairs."""
    K = m.K
    counts = np.zeros((K, K), dtype=np.int64)
    for t in range(1, m.T + 1):
        counts += confusion(m.at(t - 1), m.at(t), K)
    return counts


def estimate_transition(m: MembershipSeries, warnings: Optional[List[str]] = None) -> TransitionMatrix:
    """Row-normalized transition counts; rows with no departures become uniform."""
    if m.T < 1:
        raise DataError("transition estimate needs at least two time points")
    counts = transition_counts(m).astype(np.float64)
    totals = counts.sum(axis=1)
    B = np.empty_like(counts)
    for h in range(m.K):
        if totals[h] == 0:
            message = f"cluster {h + 1} has no departures; its row is set to uniform"
            logger.warning(message)
            if warnings is not None:
                warnings.append(message)
            B[h] = 1.0 / m.K
        else:
            B[h] = counts[h] / totals[h]
    return TransitionMatrix(B)


def corrupt_labels(m: MembershipSeries, fraction: float, rng: np.random.Generator) -> MembershipSeries:
    """Move a ``fraction`` of (node, time) labels to a different, uniformly chosen cluster."""
    if not 0 <= fraction <= 1:
        raise DataError(f"corruption fraction must lie in [0, 1], got {fraction}")
    labels = m.labels.copy()
    if m.K == 1 or fraction == 0:
        return MembershipSeries(labels, m.K)
    flat = labels.ravel()
    n_cells = int(round(fraction * flat.size))
    cells = rng.choice(flat.size, size=n_cells, replace=False)
    shift = rng.integers(1, m.K, size=n_cells)
    flat[cells] = (flat[cells] - 1 + shift) % m.K + 1
    return MembershipSeries(flat.reshape(labels.shape), m.K)


def _histograms(y: np.ndarray, statistic: str) -> Dict[Any, float]:
    """Bin masses of one statistic as fractions of nodes (degree) or dyads (geodesic)."""
    n = y.shape[0]
    if statistic == "degree":
        values, counts = np.unique(degrees(y), return_counts=True)
        return {int(v): c / n for v, c in zip(values, counts)}
    if statistic == "geodesic":
        total = n * (n - 1) / 2
        return {k: v / total for k, v in geodesic_histogram(y).items()} if total else {}
    raise DataError(f"unknown goodness-of-fit statistic '{statistic}'")


def _bin_order(bins) -> List[Any]:
    numeric = sorted(b for b in bins if b != UNREACHABLE)
    return numeric + ([UNREACHABLE] if UNREACHABLE in bins else [])


def _gof_replicate(args) -> np.ndarray:
    bundle, y_prev, t, seed, r = args
    return bundle.simulate_next(y_prev, derive_rng(seed, "gof", r), t=t)


def gof(net_obs: DynamicNetwork, bundle, n_sims: int = 100, seed: int = 0,
        statistics: Sequence[str] = GOF_STATISTICS, workers: int = 1) -> Dict[str, Dict[str, Any]]:
    """Compare the last observed slice to replicates of the final transition.

    Returns, per statistic, a tidy ``table`` (statistic, bin, observed, q05,
    q50, q95, covered), the share of covered bins and the aggregate
    discrepancy (mean absolute deviation of observed mass from the median).
    """
    if bundle is None or not bundle.is_fitted:
        raise DataError("goodness of fit needs a fitted model bundle")
    net_obs.require_temporal()
    if n_sims < 1:
        raise DataError("goodness of fit needs at least one replicate")
    T = net_obs.T
    y_prev, y_obs = net_obs.slice(T - 1), net_obs.slice(T)
    jobs = [(bundle, y_prev, T, seed, r) for r in range(n_sims)]
    if workers > 1:
        with Pool(processes=workers) as pool:
            replicates = pool.map(_gof_replicate, jobs)
    else:
        replicates = [_gof_replicate(job) for job in jobs]

    report = {}
    for statistic in statistics:
        observed = _histograms(y_obs, statistic)
        simulated = [_histograms(y, statistic) for y in replicates]
        bins = _bin_order(set(observed).union(*simulated))
        sim = np.array([[h.get(b, 0.0) for b in bins] for h in simulated])
        obs = np.array([observed.get(b, 0.0) for b in bins])
        q05, q50, q95 = (np.quantile(sim, q, axis=0) for q in QUANTILES)
        covered = (obs >= q05 - 1e-12) & (obs <= q95 + 1e-12)
        table = pd.DataFrame({"statistic": statistic, "bin": [str(b) for b in bins], "observed": obs,
                              "q05": q05, "q50": q50, "q95": q95, "covered": covered})
        report[statistic] = {
            "table": table,
            "coverage": float(covered.mean()) if len(bins) else 1.0,
            "discrepancy": float(np.mean(np.abs(obs - q50))) if len(bins) else 0.0,
        }
        logger.info(f"GoF {statistic}: coverage {report[statistic]['coverage']:.2f}, "
                    f"discrepancy {report[statistic]['discrepancy']:.4f}")
    return report


def predict_proba(bundle, y_last: np.ndarray, t: Optional[int] = None, method: str = "conditional",
                  n_sims: int = 100, seed: int = 0, membership: str = "fixed") -> np.ndarray:
    """Tie probabilities for the slice after ``y_last``.

    ``method="conditional"`` evaluates each dyad's conditional at the fitted
    coefficients against ``y_last``; ``method="simulate"`` averages
    ``n_sims`` forward replicates (the next-slice marginals).
    """
    if bundle is None or not bundle.is_fitted:
        raise DataError("prediction needs a fitted model bundle")
    y_last = validate_adjacency(y_last, "last slice")
    if method == "conditional":
        return bundle.predict_proba(y_last, t=t, membership=membership)
    if method == "simulate":
        if t is not None and t != bundle.memberships.T:
            raise DataError("simulation-based prediction forecasts from the last fitted slice only")
        total = np.zeros(y_last.shape, dtype=np.float64)
        for r in range(n_sims):
            total += bundle.simulate_next(y_last, derive_rng(seed, "predict", r))
        return total / n_sims
    raise DataError(f"unknown prediction method '{method}'")


def within_mask(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    return labels[:, None] == labels[None, :]


def auc(scores: np.ndarray, y_true: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Probability that a random tie outscores a random non-tie, ties in score counting 1/2.

    Only the upper triangle is used; ``mask`` restricts the dyads further
    (for example to within-cluster pairs).
    """
    scores = np.asarray(scores, dtype=np.float64)
    y_true = np.asarray(y_true)
    if scores.shape != y_true.shape:
        raise DataError(f"score matrix {scores.shape} does not match truth {y_true.shape}")
    keep = np.triu(np.ones(y_true.shape, dtype=bool), k=1)
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    truth = y_true[keep]
    if truth.size == 0 or truth.min() == truth.max():
        raise DataError("AUC is undefined when the truth has only ties or only non-ties")
    return float(roc_auc_score(truth, scores[keep]))


__all__ = [
    "align_labels",
    "apply_permutation",
    "auc",
    "confusion",
    "corrupt_labels",
    "estimate_transition",
    "gof",
    "hamming_error",
    "misclustering",
    "predict_proba",
    "transition_counts",
    "within_mask",
]
