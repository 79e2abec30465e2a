import itertools

import numpy as np
import pytest

from src.business.structure import (UNREACHABLE, build_cluster_view, cluster_views, degrees, edge_count,
                                    geodesic_histogram, subgraph, triangle_count)
from src.models.errors import DataError
from src.models.network import MembershipSeries, complete_graph, empty_graph, from_edges, validate_adjacency


def test_counts_on_complete_graph():
    y = complete_graph(4)
    assert edge_count(y) == 6
    assert triangle_count(y) == 4
    assert degrees(y).tolist() == [3, 3, 3, 3]


def test_geodesic_histogram_on_path():
    y = from_edges(4, [(0, 1), (1, 2), (2, 3)])
    assert geodesic_histogram(y) == {1: 3, 2: 2, 3: 1}


def test_geodesic_histogram_counts_unreachable_pairs():
    y = from_edges(5, [(0, 1), (2, 3)])
    hist = geodesic_histogram(y)
    assert hist[1] == 2
    assert hist[UNREACHABLE] == 8
    assert sum(hist.values()) == 10


def test_geodesic_histogram_empty_graph():
    hist = geodesic_histogram(empty_graph(4))
    assert hist == {UNREACHABLE: 6}


def test_subgraph_keeps_order_and_rejects_bad_nodes():
    y = from_edges(4, [(0, 3), (1, 2)])
    sub = subgraph(y, [3, 0])
    assert sub.tolist() == [[0, 1], [1, 0]]
    with pytest.raises(DataError):
        subgraph(y, [])
    with pytest.raises(DataError):
        subgraph(y, [0, 4])


def test_cluster_view_splits_remain_joiners_and_leavers():
    y_prev = from_edges(5, [(0, 1), (1, 2), (3, 4)])
    y_curr = from_edges(5, [(0, 2), (3, 4)])
    labels_prev = np.array([1, 1, 1, 2, 2])
    labels_curr = np.array([1, 1, 2, 2, 1])
    view = build_cluster_view(y_prev, y_curr, labels_prev, labels_curr, k=1, t=1)
    assert view.remain.tolist() == [0, 1]
    assert view.joiners.tolist() == [4]
    assert view.leavers.tolist() == [2]
    assert view.prev_adj.tolist() == [[0, 1], [1, 0]]
    assert view.curr_adj.tolist() == [[0, 0], [0, 0]]


def test_cluster_views_cover_every_cluster(path_net):
    m = MembershipSeries(np.array([[1, 1], [1, 1], [1, 2], [2, 2], [2, 2]]), 2)
    views = cluster_views(path_net, m, 1)
    assert [v.cluster for v in views] == [1, 2]
    assert views[0].remain.tolist() == [0, 1]
    assert views[1].joiners.tolist() == [2]
    with pytest.raises(DataError):
        cluster_views(path_net, m, 2)


def test_validate_adjacency_rejects_malformed_matrices():
    assert validate_adjacency(np.array([[0, 1], [1, 0]], dtype=np.int64)).dtype == np.uint8
    for bad in (np.zeros((2, 3)), np.array([[0, 1], [0, 0]]), np.array([[1, 0], [0, 0]]),
                np.array([[0, 2], [2, 0]])):
        with pytest.raises(DataError):
            validate_adjacency(bad)


@pytest.mark.parametrize("seed", range(5))
def test_triangle_count_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 9
    y = np.triu(rng.random((n, n)) < 0.45, 1).astype(np.uint8)
    y = y + y.T
    brute = sum(1 for i, j, k in itertools.combinations(range(n), 3) if y[i, j] and y[j, k] and y[i, k])
    assert triangle_count(y) == brute


@pytest.mark.parametrize("seed", range(5))
def test_subgraph_of_subgraph_composes(seed):
    rng = np.random.default_rng(seed)
    n = 10
    y = np.triu(rng.random((n, n)) < 0.4, 1).astype(np.uint8)
    y = y + y.T
    outer = rng.permutation(n)[:7]
    inner = rng.permutation(7)[:4]
    np.testing.assert_array_equal(subgraph(subgraph(y, outer), inner), subgraph(y, outer[inner]))
