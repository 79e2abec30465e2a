"""Schema access utilities.

Resolves logical field names of the CSV file roles (edges, members,
predictions) to physical column names, so files with other headers can
be read through an explicit mapping.
"""
from __future__ import annotations

from typing import Dict, List, Optional

import pandas as pd

LOGICAL_DEFAULTS = {
    'edges': {
        'time': 'time',
        'source': 'source',
        'target': 'target',
    },
    'members': {
        'time': 'time',
        'node': 'node',
        'cluster': 'cluster',
    },
    'predictions': {
        'source': 'source',
        'target': 'target',
        'probability': 'probability',
    },
}


def get_col(schema: Optional[Dict[str, Dict[str, str]]], role: str, logical_name: str) -> str:
    """Return physical column name for role/logical, falling back to defaults."""
    if schema and role in schema and logical_name in schema[role]:
        return schema[role][logical_name]
    return LOGICAL_DEFAULTS.get(role, {}).get(logical_name, logical_name)


def required_columns(schema: Optional[Dict[str, Dict[str, str]]], role: str) -> List[str]:
    """Physical names of every logical column of ``role``."""
    return [get_col(schema, role, name) for name in LOGICAL_DEFAULTS[role]]


def to_logical(df: pd.DataFrame, schema: Optional[Dict[str, Dict[str, str]]], role: str) -> pd.DataFrame:
    """Rename physical columns of ``df`` to their logical names."""
    mapping = {get_col(schema, role, name): name for name in LOGICAL_DEFAULTS[role]}
    return df.rename(columns=mapping)


__all__ = ['get_col', 'required_columns', 'to_logical', 'LOGICAL_DEFAULTS']
