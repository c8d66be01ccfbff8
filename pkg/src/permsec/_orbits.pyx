# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled orbit enumeration for block-permutation channels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport lgamma, log

cnp.import_array()

DEF MAX_BLOCKS = 64


def orbit_table(int alphabet, int n, int g):
    """For every sequence in ``alphabet**n`` (index order, first letter most
    significant) return the index of its canonical block arrangement (blocks
    sorted descending) and ``log2`` of the number of distinct arrangements of
    its blocks."""
    cdef int k = n // g
    cdef long long base = 1
    cdef long long m = 1
    cdef int i, j, t, run
    for i in range(g):
        base *= alphabet
    for i in range(n):
        m *= alphabet
    if k > MAX_BLOCKS:
        raise ValueError("too many blocks")
    canon_arr = np.empty(m, dtype=np.int64)
    logo_arr = np.empty(m, dtype=np.float64)
    cdef cnp.int64_t[::1] canon = canon_arr
    cdef double[::1] logo = logo_arr
    cdef long long blocks[MAX_BLOCKS]
    cdef long long s, rest, v, code
    cdef double acc
    cdef double lfk = lgamma(k + 1.0)
    cdef double inv_ln2 = 1.0 / log(2.0)
    for s in range(m):
        rest = s
        for j in range(k - 1, -1, -1):
            blocks[j] = rest % base
            rest //= base
        # insertion sort, descending
        for j in range(1, k):
            v = blocks[j]
            t = j - 1
            while t >= 0 and blocks[t] < v:
                blocks[t + 1] = blocks[t]
                t -= 1
            blocks[t + 1] = v
        code = 0
        acc = 0.0
        run = 1
        for j in range(k):
            code = code * base + blocks[j]
            if j > 0:
                if blocks[j] == blocks[j - 1]:
                    run += 1
                else:
                    acc += lgamma(run + 1.0)
                    run = 1
        acc += lgamma(run + 1.0)
        canon[s] = code
        logo[s] = (lfk - acc) * inv_ln2
    return canon_arr, logo_arr
