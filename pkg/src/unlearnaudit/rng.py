"""Counter-based random streams.

Every draw is a pure function of ``(seed, *keys, row)``, so results do not
depend on how work is split across workers or in which order it runs.
"""

from __future__ import annotations

import hashlib

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, *keys) -> np.uint64:
    h = hashlib.blake2b(repr((int(seed),) + tuple(keys)).encode(), digest_size=8)
    return np.uint64(int.from_bytes(h.digest(), "little"))


def uniform(seed: int, keys: tuple, rows) -> np.ndarray:
    """Uniform [0, 1) draws, one per entry of ``rows`` (integer counters)."""
    rows = np.asarray(rows, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(rows * _GOLDEN + stream_key(seed, *keys))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def choice_index(seed: int, keys: tuple, rows, n: int) -> np.ndarray:
    """Uniform integer draws in ``[0, n)``."""
    idx = np.floor(uniform(seed, keys, rows) * n).astype(np.intp)
    return np.minimum(idx, n - 1)
