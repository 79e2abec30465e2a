"""
Report Tables

This module turns evaluation results into tidy, plot-ready tables (one row
per time, bin, cluster or replicate) for external plotting tools: river
plot flows, mis-clustering traces, goodness-of-fit bands and relative
errors of TERGM estimates.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..business.evaluation import confusion
from ..models.network import MembershipSeries
from ..models.results import FitResult, MisclusteringReport


class ReportTables:
    """Builds tidy tables from evaluation outputs."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def river_table(self, memberships: MembershipSeries) -> pd.DataFrame:
        """Node flows between clusters for every consecutive pair of slices."""
        rows = []
        K = memberships.K
        for t in range(1, memberships.T + 1):
            counts = confusion(memberships.at(t - 1), memberships.at(t), K)
            for h, k in zip(*np.nonzero(counts)):
                rows.append({"time": t, "from_cluster": h + 1, "to_cluster": k + 1,
                             "count": int(counts[h, k])})
        return pd.DataFrame(rows, columns=["time", "from_cluster", "to_cluster", "count"])

    def misclustering_table(self, report: MisclusteringReport, method: str = "",
                            replicate: Optional[int] = None) -> pd.DataFrame:
        df = pd.DataFrame({
            "time": np.arange(len(report.per_time)),
            "rate": report.per_time,
            "chained_rate": report.chained,
        })
        df.insert(0, "method", method)
        if replicate is not None:
            df.insert(1, "replicate", replicate)
        return df

    def gof_table(self, report: Dict[str, Dict[str, Any]], model: str = "") -> pd.DataFrame:
        tables = [entry["table"] for entry in report.values()]
        if not tables:
            return pd.DataFrame(columns=["model", "statistic", "bin", "observed", "q05", "q50", "q95", "covered"])
        df = pd.concat(tables, ignore_index=True)
        df.insert(0, "model", model)
        return df

    def estimates_table(self, fits: Sequence[Optional[FitResult]], truth: Optional[np.ndarray] = None,
                        source: str = "", replicate: Optional[int] = None) -> pd.DataFrame:
        """One row per cluster and term; relative error (estimate - truth) / |truth| when truth is known."""
        rows: List[Dict[str, Any]] = []
        for k, fit in enumerate(fits, start=1):
            if fit is None:
                self.logger.debug(f"No fit for cluster {k}; left out of the estimates table")
                continue
            for p, term in enumerate(fit.terms):
                row = {"source": source, "cluster": k, "term": term,
                       "estimate": float(fit.theta_hat[p]), "std_error": float(fit.std_err[p]),
                       "method": fit.method, "converged": bool(fit.converged)}
                if truth is not None:
                    value = float(np.atleast_2d(truth)[k - 1, p])
                    row["truth"] = value
                    row["relative_error"] = (row["estimate"] - value) / abs(value) if value else np.nan
                rows.append(row)
        df = pd.DataFrame(rows)
        if replicate is not None:
            df.insert(1, "replicate", replicate)
        return df

    def transition_table(self, matrix: np.ndarray) -> pd.DataFrame:
        matrix = np.asarray(matrix)
        K = matrix.shape[0]
        h, k = np.meshgrid(np.arange(1, K + 1), np.arange(1, K + 1), indexing="ij")
        return pd.DataFrame({"from_cluster": h.ravel(), "to_cluster": k.ravel(),
                             "probability": matrix.ravel()})


def summarize(df: pd.DataFrame, by: Sequence[str], value: str) -> pd.DataFrame:
    """Mean, median and count of ``value`` per group."""
    return (df.groupby(list(by))[value]
              .agg(["mean", "median", "count"])
              .reset_index())


__all__ = ["ReportTables", "summarize"]
