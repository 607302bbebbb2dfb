"""Counter-based 64-bit hashing for order-independent random streams.

Both the theta family and the Monte Carlo seed fan-out need random access
by index (theta(n, k) for arbitrary cubes, seed i for arbitrary workers),
which sequential generators do not offer. The SplitMix64 finalizer is a
bijection on 64-bit words, so ``mix(key + i * GAMMA)`` is injective in i
for a fixed key.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# domain separators so theta keys and fan-out keys never share a stream
THETA_DOMAIN = 0x7468657461000001
FANOUT_DOMAIN = 0x66616E6F75740002


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.array(z, dtype=np.uint64, ndmin=1)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_M1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_M2)
    z ^= z >> np.uint64(31)
    return z


def stream_key(seed: int, domain: int) -> int:
    return mix64((int(seed) & MASK64) ^ domain)


def seed_fanout(master_seed: int, i: int) -> int:
    """64-bit seed for sample ``i`` of a run keyed by ``master_seed``.

    Injective in ``i`` over the whole 64-bit range and independent of the
    order in which samples are evaluated.
    """
    if i < 0:
        raise ValueError("sample index must be non-negative")
    key = stream_key(master_seed, FANOUT_DOMAIN)
    return mix64((key + (int(i) & MASK64) * GAMMA) & MASK64)


def seed_fanout_array(master_seed: int, indices) -> np.ndarray:
    key = np.array([stream_key(master_seed, FANOUT_DOMAIN)], dtype=np.uint64)
    idx = np.array(indices, dtype=np.uint64, ndmin=1)
    return mix64_array(key + idx * np.uint64(GAMMA))
