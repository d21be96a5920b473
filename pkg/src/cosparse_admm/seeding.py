"""Deterministic sub-seed derivation.

Every random stream is a ``numpy.random.Generator`` backed by PCG64.  A
stream is identified by ``(master_seed, *key)`` and built from
``SeedSequence(master_seed, spawn_key=key)``, so streams with different keys
are statistically independent and adding a new key never perturbs an
existing one.
"""

from __future__ import annotations

import numpy as np

# Stream keys used by the instance generator.  Never renumber these.
FRAME = 0
COSUPPORT = 1
SIGNAL = 2
MEASUREMENT = 3
NOISE = 4
PROBES = 5

_MASK64 = (1 << 64) - 1


def rng(seed: int, *key: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def sub_seed(seed: int, *key: int) -> int:
    """A 64-bit integer seed derived from ``seed`` and ``key``."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
