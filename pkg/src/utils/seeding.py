"""Derivation of independent random streams from one master seed.

Every stochastic step draws from its own stream keyed by a tag and a few
indices (cluster, time, replicate), so partial re-runs and parallel runs
reproduce serial results exactly.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream_key(seed: int, tag: str, *indices: int) -> list:
    return [int(seed) & 0xFFFFFFFF, zlib.crc32(tag.encode("utf-8"))] + [int(i) for i in indices]


def derive_rng(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Return the generator for stream (seed, tag, *indices)."""
    return np.random.default_rng(np.random.SeedSequence(stream_key(seed, tag, *indices)))


def derive_seed(seed: int, tag: str, *indices: int) -> int:
    """Return a plain integer seed for libraries that take ``random_state``."""
    return int(np.random.SeedSequence(stream_key(seed, tag, *indices)).generate_state(1)[0])


__all__ = ["derive_rng", "derive_seed", "stream_key"]
