"""
Clustering Interface - Stage-One Contract

This module defines the abstract interface shared by the membership
estimators (the dynamic latent space working model and the spectral DSBM
baseline) and the result object they return.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List

from ..models.errors import DataError
from ..models.network import DynamicNetwork, MembershipSeries


@dataclass
class ClusteringResult:
    """A membership estimate with its diagnostics."""
    memberships: MembershipSeries
    model: str
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def add_warning(self, message: str):
        """Add a warning message."""
        self.warnings.append(message)


class ClusteringModel(ABC):
    """
    Abstract interface for dynamic community estimators.

    Implementations are configured at construction and estimate memberships
    for every node at every time point of a dynamic network.
    """

    name: str = "abstract"

    def __init__(self, K: int):
        if K < 1:
            raise DataError(f"number of clusters must be at least 1, got {K}")
        self.K = int(K)
        self.logger = logging.getLogger(__name__)
        self.result_: ClusteringResult = None

    @abstractmethod
    def fit(self, net: DynamicNetwork) -> ClusteringResult:
        """
        Estimate memberships for ``net``.

        Args:
            net: Observed dynamic network with T+1 slices

        Returns:
            ClusteringResult with a MembershipSeries over all slices
        """
        pass

    def fit_predict(self, net: DynamicNetwork) -> MembershipSeries:
        return self.fit(net).memberships

    def check_input(self, net: DynamicNetwork):
        """Reject networks with fewer nodes than clusters."""
        if self.K > net.n:
            raise DataError(f"K={self.K} exceeds the number of nodes n={net.n}")

    @property
    def is_fitted(self) -> bool:
        return self.result_ is not None


__all__ = ["ClusteringModel", "ClusteringResult"]
