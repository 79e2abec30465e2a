"""
Visualization Package

This package turns evaluation results into tidy tables that external
plotting tools can draw directly.
"""
