"""
THERGM Toolkit - Source Package

This package contains the modules of the temporal hierarchical ERGM
toolkit: simulation, two-stage estimation, baselines and evaluation.
"""

__version__ = "1.0.0"
__author__ = "Network Analysis Team"
__description__ = "Temporal hierarchical exponential random graph models for dynamic networks"
