# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline int _popcount(long long v) nogil:
    cdef int c = 0
    while v:
        c += v & 1
        v >>= 1
    return c


def tie_hits(int n_admissible, int rank, int grid):
    cdef int k, hits = 0, slot
    cdef double xi
    for k in range(grid):
        xi = (k + 0.5) / grid
        slot = <int>(xi * n_admissible)
        if slot > n_admissible - 1:
            slot = n_admissible - 1
        if slot == rank:
            hits += 1
    return hits


def fv_counts(admissible, safe_after, dims, int action, int grid):
    cdef cnp.int64_t[::1] adm = np.ascontiguousarray(admissible, dtype=np.int64)
    cdef cnp.uint8_t[::1] safe = np.ascontiguousarray(safe_after, dtype=np.uint8)
    cdef cnp.int64_t[::1] d = np.ascontiguousarray(dims, dtype=np.int64)
    cdef Py_ssize_t nf = d.shape[0], n_env = adm.shape[0]
    cdef cnp.int64_t[::1] offsets = np.zeros(nf, dtype=np.int64)
    cdef Py_ssize_t f, e, rem, total = 0
    for f in range(nf):
        offsets[f] = total
        total += d[f]
    out_arr = np.zeros(total, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr

    cdef cnp.int64_t[:, ::1] table = np.zeros((33, 33), dtype=np.int64)
    cdef int nn, r
    for nn in range(1, 17):
        for r in range(nn):
            table[nn, r] = tie_hits(nn, r, grid)

    cdef long long mask, below_mask = (1LL << action) - 1
    cdef long long hits
    with nogil:
        for e in range(n_env):
            mask = adm[e]
            if not safe[e] or not ((mask >> action) & 1):
                continue
            hits = table[_popcount(mask), _popcount(mask & below_mask)]
            if hits == 0:
                continue
            rem = e
            f = nf - 1
            while f >= 0:
                out[offsets[f] + rem % d[f]] += hits
                rem = rem // d[f]
                f -= 1
    return out_arr


def lcs_length(a, b):
    cdef cnp.int64_t[::1] x = np.ascontiguousarray(a, dtype=np.int64)
    cdef cnp.int64_t[::1] y = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], i, j
    if n == 0 or m == 0:
        return 0
    cdef cnp.int64_t[::1] prev = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] cur = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] tmp
    with nogil:
        for i in range(n):
            cur[0] = 0
            for j in range(m):
                if x[i] == y[j]:
                    cur[j + 1] = prev[j] + 1
                elif prev[j + 1] >= cur[j]:
                    cur[j + 1] = prev[j + 1]
                else:
                    cur[j + 1] = cur[j]
            tmp = prev
            prev = cur
            cur = tmp
    return int(prev[m])
