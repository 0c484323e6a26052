"""Keyed random streams.

Each stream is a Philox generator keyed by ``(seed, role, step)``. Per-particle
draws at a step are rows of one ``(K, ...)`` block drawn from that step's
stream, so particle ``i`` always receives the same numbers no matter how the
work is split across workers.
"""

from __future__ import annotations

import numpy as np

INIT = 0
DEATH = 1
DONOR = 2
REBIRTH = 3
RESAMPLE = 4
FINAL = 5
ORACLE = 6

MAX_SEED = 2**64 - 1


def stream(seed: int, role: int, step: int = 0) -> np.random.Generator:
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=(role, step))
    return np.random.Generator(np.random.Philox(ss))
