"""Counter-based random numbers: Philox4x32-10 (Salmon et al., SC'11).

Every uniform is a pure function of ``(master_seed, trajectory_id, index)``:

* key     = ``(seed & 0xffffffff, seed >> 32)``
* counter = ``(block & 0xffffffff, block >> 32, tid & 0xffffffff, tid >> 32)``
  with ``block = index // 2``
* the four output words ``x0..x3`` give two doubles in ``[0, 1)``:
  ``((x0 >> 5) * 2**26 + (x1 >> 6)) / 2**53`` for even ``index`` and the same
  with ``x2, x3`` for odd ``index``.

Trajectory streams therefore never overlap and need no shared state.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

ALGORITHM = "philox4x32-10"

_M0 = uint64(0xD2511F53)
_M1 = uint64(0xCD9E8D57)
_W0 = uint64(0x9E3779B9)
_W1 = uint64(0xBB67AE85)
_MASK = uint64(0xFFFFFFFF)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on a 4x32-bit counter with a 2x32-bit key (words held in uint64)."""
    c0 = uint64(c0) & _MASK
    c1 = uint64(c1) & _MASK
    c2 = uint64(c2) & _MASK
    c3 = uint64(c3) & _MASK
    k0 = uint64(k0) & _MASK
    k1 = uint64(k1) & _MASK
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> uint64(32)
        lo0 = p0 & _MASK
        hi1 = p1 >> uint64(32)
        lo1 = p1 & _MASK
        c0 = (hi1 ^ c1 ^ k0) & _MASK
        c1 = lo1
        c2 = (hi0 ^ c3 ^ k1) & _MASK
        c3 = lo0
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def _to_double(hi, lo):
    return float((hi >> uint64(5)) * uint64(67108864) + (lo >> uint64(6))) * _INV53


@njit(cache=True, nogil=True)
def uniform_pair(seed, tid, block):
    seed = uint64(seed)
    tid = uint64(tid)
    block = uint64(block)
    x0, x1, x2, x3 = philox4x32(
        block & _MASK, block >> uint64(32), tid & _MASK, tid >> uint64(32),
        seed & _MASK, seed >> uint64(32),
    )
    return _to_double(x0, x1), _to_double(x2, x3)


@njit(cache=True, nogil=True)
def uniform(seed, tid, index):
    a, b = uniform_pair(seed, tid, index // 2)
    return a if index % 2 == 0 else b


@njit(cache=True)
def _uniforms(seed, tid, start, n, out):
    for i in range(n):
        out[i] = uniform(seed, tid, start + i)


def uniforms(seed: int, tid: int, n: int, start: int = 0) -> np.ndarray:
    """``n`` consecutive uniforms of stream ``(seed, tid)`` starting at ``start``."""
    out = np.empty(n, dtype=np.float64)
    _uniforms(np.uint64(seed), np.uint64(tid), np.int64(start), np.int64(n), out)
    return out


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("master seed must be a 64-bit unsigned integer")
    return seed
