"""Seedable random streams.

All randomness in the package flows through Philox-4x64 counter-based
generators keyed explicitly by ``(seed, stream id)``.  Philox is fully
specified (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3"),
so any implementation with the same key produces the same stream; uniform
doubles are formed from the high 53 bits of each 64-bit output word, which
is numpy's convention.

Stream ids combine a purpose code (high 16 bits) with an index (low 48
bits) so that independent consumers of the same seed never collide.
"""

import numpy as np

# Purpose codes for stream derivation.
SHAPE = 1      # synthetic mesh parameter draws
SAMPLE = 2     # surface sampling draws
DATASET = 3    # per-cloud seed derivation
INIT = 4       # model parameter initialization
SPLIT = 5      # train/test partition shuffle
SHUFFLE = 6    # per-epoch batch order

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def stream_id(purpose: int, index: int = 0) -> int:
    """Pack a purpose code and an index into one 64-bit stream id."""
    if not 0 <= purpose < (1 << 16):
        raise ValueError(f"purpose {purpose} out of range")
    if not 0 <= index < (1 << 48):
        raise ValueError(f"index {index} out of range")
    return (purpose << 48) | index


def make_rng(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Return a Philox-4x64 generator keyed by (seed, purpose, index)."""
    key = np.array([np.uint64(seed) & _MASK, np.uint64(stream_id(purpose, index))])
    return np.random.Generator(np.random.Philox(key=key))


def derive_seeds(seed: int, purpose: int, count: int) -> np.ndarray:
    """Draw ``count`` independent 63-bit sub-seeds from one master seed."""
    rng = make_rng(seed, purpose)
    return rng.integers(0, 2**63, size=count, dtype=np.int64)
