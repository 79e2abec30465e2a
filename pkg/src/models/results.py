"""
Result Models

Containers for what the pipeline produces: simulated data, fitted TERGM
coefficients, evaluation reports and run manifests. Each knows how to turn
itself into plain JSON-ready dictionaries.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import DataError
from .network import DynamicNetwork, MembershipSeries


@dataclass
class TransitionSeries:
    """(y_prev, y_curr) pairs; each pair carries its own node set."""
    pairs: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    node_sets: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        for idx, (y_prev, y_curr) in enumerate(self.pairs):
            if np.shape(y_prev) != np.shape(y_curr):
                raise DataError(f"transition {idx}: {np.shape(y_prev)} vs {np.shape(y_curr)}")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def add(self, y_prev: np.ndarray, y_curr: np.ndarray, nodes: Optional[np.ndarray] = None):
        if np.shape(y_prev) != np.shape(y_curr):
            raise DataError(f"transition: {np.shape(y_prev)} vs {np.shape(y_curr)}")
        self.pairs.append((np.asarray(y_prev), np.asarray(y_curr)))
        self.node_sets.append(np.arange(len(y_prev)) if nodes is None else np.asarray(nodes))

    def extend(self, other: "TransitionSeries"):
        self.pairs.extend(other.pairs)
        self.node_sets.extend(other.node_sets)

    def require_nonempty(self):
        if not self.pairs:
            raise DataError("transition series is empty")

    @property
    def max_nodes(self) -> int:
        return max((len(p) for p, _ in self.pairs), default=0)


@dataclass
class FitResult:
    """Estimated coefficients for one cluster's TERGM."""
    terms: Tuple[str, ...]
    theta_hat: np.ndarray
    std_err: np.ndarray
    method: str
    iterations: int
    converged: bool
    loglik: Optional[float] = None
    cluster: Optional[int] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.terms = tuple(self.terms)
        self.theta_hat = np.asarray(self.theta_hat, dtype=np.float64)
        self.std_err = np.asarray(self.std_err, dtype=np.float64)
        if self.theta_hat.shape != (len(self.terms),) or self.std_err.shape != (len(self.terms),):
            raise DataError("estimate and standard error lengths must match the term count")

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.terms, self.theta_hat.tolist()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cluster": self.cluster,
            "terms": list(self.terms),
            "estimates": self.theta_hat.tolist(),
            "std_errors": self.std_err.tolist(),
            "method": self.method,
            "iterations": self.iterations,
            "converged": bool(self.converged),
            "loglik": self.loglik,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitResult":
        try:
            return cls(terms=tuple(data["terms"]), theta_hat=data["estimates"],
                       std_err=data["std_errors"], method=data["method"],
                       iterations=int(data.get("iterations", 0)),
                       converged=bool(data.get("converged", False)),
                       loglik=data.get("loglik"), cluster=data.get("cluster"),
                       metadata=dict(data.get("metadata", {})))
        except KeyError as exc:
            raise DataError(f"fit result is missing field {exc}") from None


@dataclass
class SimulationOutput:
    """A simulated dynamic network with its true memberships."""
    net: DynamicNetwork
    truth: MembershipSeries
    config: Dict[str, Any]
    trace: List[Dict[str, Any]]

    def __post_init__(self):
        self.truth.check_matches(self.net)
        if len(self.trace) != self.net.T:
            raise DataError(f"trace has {len(self.trace)} steps for T={self.net.T}")


@dataclass
class MisclusteringReport:
    """Per-time Hamming error after alignment, plus the chained variant."""
    per_time: np.ndarray
    permutations: List[np.ndarray]
    chained: np.ndarray

    @property
    def average(self) -> float:
        return float(np.mean(self.per_time)) if self.per_time.size else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "per_time": self.per_time.tolist(),
            "average": self.average,
            "permutations": [p.tolist() for p in self.permutations],
            "chained": self.chained.tolist(),
        }


@dataclass
class EvalReport:
    """All evaluation quantities of one run."""
    misclustering: Optional[MisclusteringReport] = None
    transition_matrix: Optional[np.ndarray] = None
    transition_warnings: List[str] = field(default_factory=list)
    gof: Dict[str, Any] = field(default_factory=dict)
    auc: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        if self.misclustering is not None:
            out["misclustering"] = self.misclustering.to_dict()
        if self.transition_matrix is not None:
            out["transition_matrix"] = np.asarray(self.transition_matrix).tolist()
            out["transition_warnings"] = list(self.transition_warnings)
        if self.gof:
            out["gof"] = {name: {k: v for k, v in report.items() if k != "table"}
                          for name, report in self.gof.items()}
        if self.auc is not None:
            out["auc"] = self.auc
        return out


@dataclass
class RunManifest:
    """Everything needed to re-execute a command bit-identically."""
    command: str
    arguments: Dict[str, Any]
    config: Dict[str, Any]
    seed: int
    artifacts: Dict[str, str] = field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    version: str = ""
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "arguments": self.arguments,
            "config": self.config,
            "seed": self.seed,
            "artifacts": self.artifacts,
            "wall_clock_seconds": self.wall_clock_seconds,
            "version": self.version,
            **({"extra": self.extra} if self.extra else {}),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        try:
            return cls(command=data["command"], arguments=dict(data["arguments"]),
                       config=dict(data.get("config", {})), seed=int(data.get("seed", 0)),
                       artifacts=dict(data.get("artifacts", {})),
                       wall_clock_seconds=float(data.get("wall_clock_seconds", 0.0)),
                       version=str(data.get("version", "")), extra=dict(data.get("extra", {})))
        except KeyError as exc:
            raise DataError(f"manifest is missing field {exc}") from None
