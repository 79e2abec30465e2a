"""
Data Input/Output

This module reads and writes the toolkit's file formats:

- edge lists ``time,source,target`` (one row per undirected tie per slice;
  a row with an empty target only declares a node),
- membership tables ``time,node,cluster``,
- prediction tables ``source,target,probability``,
- JSON documents (fit bundles, reports, manifests).

Every CSV row is validated; a malformed row raises DataError naming its
1-based line in the file.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..models.errors import DataError
from ..models.network import DynamicNetwork, MembershipSeries
from .schema_access import get_col, required_columns, to_logical

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ValidationResults:
    """Results of file validation."""

    def __init__(self):
        self.is_valid = True
        self.errors: List[str] = []
        self.warnings: List[str] = []
        self.net: Optional[DynamicNetwork] = None
        self.memberships: Optional[MembershipSeries] = None

    def add_error(self, message: str):
        """Add an error message."""
        self.errors.append(message)
        self.is_valid = False

    def add_warning(self, message: str):
        """Add a warning message."""
        self.warnings.append(message)

    def raise_if_invalid(self):
        if not self.is_valid:
            raise DataError("; ".join(self.errors))


class NumpyEncoder(json.JSONEncoder):
    """JSON encoder that understands numpy scalars and arrays."""

    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        return super().default(o)


def write_json(data: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(data, f, cls=NumpyEncoder, indent=2, sort_keys=False)
        f.write("\n")
    return path


def read_json(path: PathLike) -> Any:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _read_table(path: PathLike, role: str, schema: Optional[Dict[str, Dict[str, str]]] = None) -> pd.DataFrame:
    """Read a CSV as strings with logical column names and a ``line`` column."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: file is empty") from None
    except pd.errors.ParserError as exc:
        raise DataError(f"{path}: malformed row ({exc})") from None
    missing = [c for c in required_columns(schema, role) if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}; found {list(df.columns)}")
    df = to_logical(df, schema, role)
    df["line"] = np.arange(len(df)) + 2
    blank = (df.drop(columns="line") == "").all(axis=1)
    return df.loc[~blank].reset_index(drop=True)


def _parse_int(df: pd.DataFrame, column: str, path: PathLike, minimum: int = 0,
               allow_empty: bool = False) -> pd.Series:
    values = pd.to_numeric(df[column].str.strip(), errors="coerce")
    bad = values.isna() | (values < minimum) | (values != values.round())
    if allow_empty:
        bad &= df[column].str.strip() != ""
    if bad.any():
        row = df.loc[bad.idxmax()]
        raise DataError(f"{path}, line {row['line']}: '{column}' must be an integer >= {minimum}, "
                        f"got {row[column]!r}")
    return values


def _check_nonempty(df: pd.DataFrame, column: str, path: PathLike):
    empty = df[column].str.strip() == ""
    if empty.any():
        row = df.loc[empty.idxmax()]
        raise DataError(f"{path}, line {row['line']}: '{column}' is empty")


def _node_universe(ids: Sequence[str]) -> Tuple[Tuple[Any, ...], Dict[str, int]]:
    """Integer ids map to 0..max_id; other ids to their sorted order."""
    unique = sorted(set(i.strip() for i in ids))
    if unique and all(u.isdigit() for u in unique):
        n = max(int(u) for u in unique) + 1
        return tuple(range(n)), {u: int(u) for u in unique}
    return tuple(unique), {u: idx for idx, u in enumerate(unique)}


def read_network(edges_path: PathLike, members_path: Optional[PathLike] = None,
                 schema: Optional[Dict[str, Dict[str, str]]] = None,
                 K: Optional[int] = None) -> Tuple[DynamicNetwork, Optional[MembershipSeries]]:
    """Read an edge list (and optionally a membership table over the same nodes)."""
    edges = _read_table(edges_path, "edges", schema)
    _check_nonempty(edges, "source", edges_path)
    times = _parse_int(edges, "time", edges_path)
    ids = list(edges["source"]) + [v for v in edges["target"] if v.strip()]
    members = None
    if members_path is not None:
        members = _read_table(members_path, "members", schema)
        _check_nonempty(members, "node", members_path)
        ids += list(members["node"])
    node_ids, index = _node_universe(ids)
    n_slices = int(times.max()) + 1 if len(times) else 1
    member_times = None
    if members is not None:
        member_times = _parse_int(members, "time", members_path)
        if len(member_times):
            n_slices = max(n_slices, int(member_times.max()) + 1)

    slices = np.zeros((n_slices, len(node_ids), len(node_ids)), dtype=np.uint8)
    for t, line, source, target in zip(times.astype(int), edges["line"], edges["source"], edges["target"]):
        source, target = source.strip(), target.strip()
        if not target:
            continue
        i, j = index[source], index[target]
        if i == j:
            raise DataError(f"{edges_path}, line {line}: self-loop on node {source}")
        slices[t, i, j] = slices[t, j, i] = 1
    net = DynamicNetwork.from_slices(list(slices), node_ids)
    logger.info(f"Read {edges_path}: {net.n} nodes, {len(net)} slices, "
                f"{int(slices.sum() // 2)} tie-slices")

    membership = None
    if members is not None:
        membership = _memberships(members, member_times, index, net, members_path, K)
    return net, membership


def _memberships(df: pd.DataFrame, times: pd.Series, index: Dict[str, int], net: DynamicNetwork,
                 path: PathLike, K: Optional[int]) -> MembershipSeries:
    clusters = _parse_int(df, "cluster", path, minimum=1)
    labels = np.zeros((net.n, len(net)), dtype=np.int64)
    for t, line, node, k in zip(times.astype(int), df["line"], df["node"], clusters.astype(int)):
        i = index[node.strip()]
        if labels[i, t] and labels[i, t] != k:
            raise DataError(f"{path}, line {line}: node {node} has two clusters at time {t}")
        labels[i, t] = k
    missing = np.argwhere(labels == 0)
    if len(missing):
        i, t = missing[0]
        raise DataError(f"{path}: no cluster for node {net.node_ids[i]} at time {t} "
                        f"({len(missing)} node-times missing)")
    K = int(K or labels.max())
    if labels.max() > K:
        raise DataError(f"{path}: cluster label {labels.max()} exceeds K={K}")
    return MembershipSeries(labels, K)


def read_memberships(path: PathLike, net: DynamicNetwork, K: Optional[int] = None,
                     schema: Optional[Dict[str, Dict[str, str]]] = None) -> MembershipSeries:
    """Read a membership table for the nodes of an already loaded network."""
    df = _read_table(path, "members", schema)
    _check_nonempty(df, "node", path)
    times = _parse_int(df, "time", path)
    if len(times) and int(times.max()) >= len(net):
        row = df.loc[times.idxmax()]
        raise DataError(f"{path}, line {row['line']}: time {row['time']} beyond the network's "
                        f"{len(net)} slices")
    index = {str(node_id): i for i, node_id in enumerate(net.node_ids)}
    unknown = ~df["node"].str.strip().isin(index)
    if unknown.any():
        row = df.loc[unknown.idxmax()]
        raise DataError(f"{path}, line {row['line']}: unknown node {row['node']!r}")
    return _memberships(df, times, index, net, path, K)


def edges_frame(net: DynamicNetwork, schema: Optional[Dict[str, Dict[str, str]]] = None) -> pd.DataFrame:
    """Edge rows for every slice, plus node-only rows for nodes without any tie."""
    rows = []
    touched = np.zeros(net.n, dtype=bool)
    for t in range(len(net)):
        iu, ju = np.nonzero(np.triu(net.slice(t), k=1))
        touched[iu] = touched[ju] = True
        rows.extend((t, net.node_ids[i], net.node_ids[j]) for i, j in zip(iu, ju))
    declared = [(net.T, net.node_ids[i], "") for i in np.flatnonzero(~touched)]
    if not any(r[0] == net.T for r in rows) and not declared:
        declared = [(net.T, net.node_ids[0], "")]
    df = pd.DataFrame(rows + declared, columns=["time", "source", "target"])
    return df.rename(columns={c: get_col(schema, "edges", c) for c in df.columns})


def write_edges(net: DynamicNetwork, path: PathLike,
                schema: Optional[Dict[str, Dict[str, str]]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    edges_frame(net, schema).to_csv(path, index=False)
    return path


def memberships_frame(m: MembershipSeries, node_ids: Sequence[Any]) -> pd.DataFrame:
    n, n_times = m.labels.shape
    return pd.DataFrame({
        "time": np.repeat(np.arange(n_times), n),
        "node": list(node_ids) * n_times,
        "cluster": m.labels.T.ravel(),
    })


def write_memberships(m: MembershipSeries, node_ids: Sequence[Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    memberships_frame(m, node_ids).to_csv(path, index=False)
    return path


def write_predictions(proba: np.ndarray, node_ids: Sequence[Any], path: PathLike) -> Path:
    """One row per unordered node pair."""
    iu, ju = np.triu_indices(proba.shape[0], k=1)
    ids = np.asarray(node_ids, dtype=object)
    df = pd.DataFrame({"source": ids[iu], "target": ids[ju], "probability": proba[iu, ju]})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.10g")
    return path


def write_table(df: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.10g")
    return path


def validate_files(edges_path: PathLike, members_path: Optional[PathLike] = None) -> ValidationResults:
    """Read a dataset, collecting problems instead of raising on the first one.

    The parsed network and memberships are kept on the results when reading succeeds.
    """
    results = ValidationResults()
    try:
        net, m = read_network(edges_path, members_path)
        results.net, results.memberships = net, m
        if net.T < 1:
            results.add_warning("network has a single slice; temporal models need at least two")
        if m is not None and (m.sizes(0) == 0).any():
            results.add_warning("some clusters are empty at time 0")
    except DataError as exc:
        results.add_error(str(exc))
    return results


__all__ = [
    "NumpyEncoder",
    "ValidationResults",
    "edges_frame",
    "memberships_frame",
    "read_json",
    "read_memberships",
    "read_network",
    "validate_files",
    "write_edges",
    "write_json",
    "write_memberships",
    "write_predictions",
    "write_table",
]
