"""Counter-based random numbers.

Every random quantity in the package is a pure function of a 64-bit key and a
counter, so results never depend on evaluation order or thread layout.  The
mixing function is the SplitMix64 finalizer; the ``k``-th draw of a stream with
key ``key`` is ``mix64(key + (k + 1) * GOLDEN)``.

Three implementations of the same arithmetic live here: plain Python integers
(key derivation), numpy ``uint64`` arrays (bulk environment generation) and
numba scalars (inner loops of the walkers).  Tests check they agree bit for bit.
"""
from __future__ import annotations

import numpy as np
from numba import njit, uint64

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_INV52 = 1.0 / 4503599627370496.0  # 2**-52

# stream tags
TAG_ENV = 0x454E56
TAG_REPLICA = 0x52455000
TAG_JUMP = 0x4A554D50
TAG_HOLD = 0x484F4C44
TAG_AUX = 0x415558


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive(seed: int, *tags: int) -> int:
    """Derive a stream key from a master seed and a sequence of integer tags."""
    h = mix64((seed & MASK64) ^ 0x5EED5EED5EED5EED)
    for tag in tags:
        h = mix64(h ^ mix64((tag & MASK64) + GOLDEN))
    return h


def replica_seed(master: int, replica: int) -> int:
    return derive(master, TAG_REPLICA, replica)


def stream_draw(key: int, k: int) -> int:
    return mix64(key + (k + 1) * GOLDEN)


def unit(z: int) -> float:
    """Map a 64-bit word to [0, 1)."""
    return (z >> 11) * _INV53


def unit_open0(z: int) -> float:
    """Map a 64-bit word to (0, 1]."""
    return ((z >> 11) + 1) * _INV53


def unit_open(z: int) -> float:
    """Map a 64-bit word to (0, 1); used for holding times so they are never zero."""
    return ((z >> 12) + 0.5) * _INV52


# --- numpy -----------------------------------------------------------------

def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def stream_draws(key: int, counters: np.ndarray) -> np.ndarray:
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + (c + np.uint64(1)) * np.uint64(GOLDEN)
    return mix64_array(z)


def replica_keys(master: int, first: int, count: int, *tags: int) -> np.ndarray:
    """``derive(replica_seed(master, i), *tags)`` for ``i = first .. first+count-1``."""
    h = np.uint64(derive(master, TAG_REPLICA))
    idx = np.arange(first, first + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        rs = mix64_array(h ^ mix64_array(idx + np.uint64(GOLDEN)))
        h = mix64_array(rs ^ np.uint64(0x5EED5EED5EED5EED))
        for tag in tags:
            h = mix64_array(h ^ np.uint64(mix64((tag & MASK64) + GOLDEN)))
    return h


def unit_array(z: np.ndarray) -> np.ndarray:
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def unit_open0_array(z: np.ndarray) -> np.ndarray:
    return ((z >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _INV53


# --- numba -----------------------------------------------------------------

@njit(inline="always")
def nb_mix64(z):
    z = uint64(z)
    z = (z ^ (z >> uint64(30))) * uint64(_M1)
    z = (z ^ (z >> uint64(27))) * uint64(_M2)
    return z ^ (z >> uint64(31))


@njit(inline="always")
def nb_draw(key, k):
    return nb_mix64(uint64(key) + (uint64(k) + uint64(1)) * uint64(GOLDEN))


@njit(inline="always")
def nb_unit(z):
    return float(z >> uint64(11)) * _INV53


@njit(inline="always")
def nb_unit_open(z):
    return (float(z >> uint64(12)) + 0.5) * _INV52


@njit(inline="always")
def nb_unit_open0(z):
    return float((z >> uint64(11)) + uint64(1)) * _INV53
