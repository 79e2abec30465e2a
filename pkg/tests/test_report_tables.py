import numpy as np
import pandas as pd
import pytest

from src.models.network import MembershipSeries
from src.models.results import FitResult, MisclusteringReport
from src.visualization.report_tables import ReportTables, summarize


@pytest.fixture
def tables():
    return ReportTables()


def test_river_table_counts_flows(tables):
    m = MembershipSeries(np.array([[1, 1, 2], [1, 2, 2], [2, 2, 2]]), 2)
    df = tables.river_table(m)
    step1 = df[df["time"] == 1].set_index(["from_cluster", "to_cluster"])["count"].to_dict()
    assert step1 == {(1, 1): 1, (1, 2): 1, (2, 2): 1}
    step2 = df[df["time"] == 2].set_index(["from_cluster", "to_cluster"])["count"].to_dict()
    assert step2 == {(1, 2): 1, (2, 2): 2}


def test_estimates_table_relative_error_and_missing_clusters(tables):
    fit = FitResult(terms=("edges", "stability"), theta_hat=[-2.0, 1.5], std_err=[0.1, 0.2],
                    method="mple", iterations=4, converged=True)
    truth = np.array([[-2.5, 1.0], [-2.0, 2.0]])
    df = tables.estimates_table([fit, None], truth, source="truth", replicate=3)
    assert len(df) == 2
    assert (df["cluster"] == 1).all() and (df["replicate"] == 3).all()
    np.testing.assert_allclose(df["relative_error"], [0.2, 0.5])


def test_zero_truth_has_no_relative_error(tables):
    fit = FitResult(terms=("triangles",), theta_hat=[0.3], std_err=[0.1], method="mple",
                    iterations=1, converged=True)
    df = tables.estimates_table([fit], np.array([[0.0]]))
    assert np.isnan(df["relative_error"].iloc[0])


def test_transition_and_misclustering_tables(tables):
    df = tables.transition_table(np.array([[0.9, 0.1], [0.3, 0.7]]))
    assert df["probability"].tolist() == [0.9, 0.1, 0.3, 0.7]
    assert df[["from_cluster", "to_cluster"]].values.tolist() == [[1, 1], [1, 2], [2, 1], [2, 2]]
    report = MisclusteringReport(per_time=np.array([0.0, 0.25]), permutations=[np.arange(2)] * 2,
                                 chained=np.array([0.0, 0.5]))
    mis = tables.misclustering_table(report, "dsbm", replicate=0)
    assert list(mis.columns) == ["method", "replicate", "time", "rate", "chained_rate"]


def test_empty_gof_report_has_columns(tables):
    assert list(tables.gof_table({})) == ["model", "statistic", "bin", "observed", "q05", "q50", "q95", "covered"]


def test_summarize():
    df = pd.DataFrame({"method": ["a", "a", "b"], "rate": [0.1, 0.3, 0.2]})
    out = summarize(df, ["method"], "rate").set_index("method")
    assert out.loc["a", "mean"] == pytest.approx(0.2)
    assert out.loc["b", "count"] == 1
