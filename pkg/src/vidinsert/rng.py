"""Seed-stable random draws shared by the noising stages.

A (seed, stream) pair names an independent substream, so per-frame noise
can be generated in any order or in parallel and still be reproducible.
"""

from __future__ import annotations

import numpy as np

__all__ = ["seeded_normal"]


def seeded_normal(seed: int, stream: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard-normal draw from the (seed, stream) substream."""
    if seed < 0 or stream < 0:
        raise ValueError(f"seed and stream must be non-negative, got {seed}, {stream}")
    return np.random.default_rng((seed, stream)).standard_normal(shape)
