"""Deterministic seed derivation for independent simulation substreams."""

from __future__ import annotations

import numpy as np


def substream_seed(seed: int, *path: int) -> int:
    """Derive a child seed from a root seed and an index path.

    The same (seed, path) always yields the same child seed, and distinct
    paths yield statistically independent streams, so work partitioned over
    indices produces output that does not depend on scheduling order.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream at ``path`` (root stream when empty)."""
    if path:
        seed = substream_seed(seed, *path)
    return np.random.default_rng(seed)
