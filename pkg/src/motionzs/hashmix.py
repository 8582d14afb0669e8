"""Portable 64-bit hashing and counter-based random streams.

Scalar helpers use Python ints masked to 64 bits; the ``*_array`` variants do
the same arithmetic on ``np.uint64`` arrays (numpy wraps silently on arrays).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def splitmix64(x: int) -> int:
    """The splitmix64 output mix applied to an already-advanced state ``x``."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def to_unit(u: int) -> float:
    """Top 53 bits of ``u`` mapped to [-1, 1)."""
    return ((u >> 11) * 2.0**-53) * 2.0 - 1.0


def splitmix64_array(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def to_unit_array(u: np.ndarray) -> np.ndarray:
    return (u >> np.uint64(11)).astype(np.float64) * 2.0**-53 * 2.0 - 1.0


def to_open01_array(u: np.ndarray) -> np.ndarray:
    """Top 53 bits mapped to (0, 1]; safe as a log argument."""
    return ((u >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def uniform_block(seed: int, tag: int, shape: tuple[int, ...]) -> np.ndarray:
    """Deterministic array of values in [-1, 1).

    Element ``i`` (row-major) is ``to_unit(splitmix64(key + (i+1)*GOLDEN))``
    with ``key = splitmix64(seed ^ tag)`` (``tag=0`` keeps ``seed`` as is).
    """
    key = seed & MASK64 if tag == 0 else splitmix64((seed ^ tag) & MASK64)
    n = int(np.prod(shape)) if shape else 1
    idx = np.arange(1, n + 1, dtype=np.uint64)
    states = np.uint64(key) + idx * np.uint64(GOLDEN)
    return to_unit_array(splitmix64_array(states)).reshape(shape)


def derive_key(*parts: int) -> int:
    """Fold integers into one 64-bit key: ``k <- splitmix64(k + part + GOLDEN)``."""
    k = 0
    for p in parts:
        k = splitmix64((k + (p & MASK64) + GOLDEN) & MASK64)
    return k


def gaussian_block(key: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normals via Box-Muller; element ``i`` uses streams ``2i+1`` and ``2i+2``."""
    n = int(np.prod(shape)) if shape else 1
    i = np.arange(n, dtype=np.uint64)
    base = np.uint64(key & MASK64)
    u1 = to_open01_array(splitmix64_array(base + (np.uint64(2) * i + np.uint64(1)) * np.uint64(GOLDEN)))
    u2 = to_open01_array(splitmix64_array(base + (np.uint64(2) * i + np.uint64(2)) * np.uint64(GOLDEN)))
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return z.reshape(shape)
