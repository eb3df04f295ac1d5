"""Pure-Python/numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``DRIVECAUSAL_PURE_PYTHON=1``.  Results are integer-exact and identical to the
compiled versions.
"""
from __future__ import annotations

import numpy as np


def tie_hits(n_admissible: int, rank: int, grid: int) -> int:
    """Number of grid noise points whose uniform tie-break picks slot ``rank`` of ``n``."""
    hits = 0
    for k in range(grid):
        xi = (k + 0.5) / grid
        if min(int(xi * n_admissible), n_admissible - 1) == rank:
            hits += 1
    return hits


def fv_counts(admissible: np.ndarray, safe_after: np.ndarray, dims, action: int,
              grid: int) -> np.ndarray:
    """Per-(factor, value) counts of (environment, noise) cells selecting ``action``.

    Args:
        admissible: uint bitmask of admissible actions per flat environment index.
        safe_after: 1 where taking ``action`` leads to a safe end state.
        dims: domain size of each factor (first factor most significant).
        action: bit index of the observed action.
        grid: number of noise grid points.

    Returns:
        int64 array of length ``sum(dims)``: counts for factor 0's values, then factor 1's, ...
    """
    dims = [int(d) for d in dims]
    adm = np.asarray(admissible, dtype=np.int64)
    bit = (adm >> action) & 1
    below = adm & ((1 << action) - 1)
    n = _popcount(adm)
    rank = _popcount(below)
    table = np.zeros((33, 33), dtype=np.int64)
    for nn in range(1, 17):
        for r in range(nn):
            table[nn, r] = tie_hits(nn, r, grid)
    hits = np.where((bit == 1) & (np.asarray(safe_after) != 0), table[n, rank], 0)
    cube = hits.reshape(dims)
    out = []
    for f in range(len(dims)):
        others = tuple(a for a in range(len(dims)) if a != f)
        out.append(cube.sum(axis=others) if others else cube)
    return np.concatenate(out).astype(np.int64)


def _popcount(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    c = np.zeros_like(v)
    while np.any(v):
        c += v & 1
        v >>= 1
    return c


def lcs_length(a, b) -> int:
    """Length of the longest common subsequence of two integer sequences."""
    a = list(a)
    b = list(b)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]
