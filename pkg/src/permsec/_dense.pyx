# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled affine map with a fixed per-row summation order."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def affine(const double[:, ::1] x, const double[:, ::1] wt, const double[::1] b):
    """``out[r, j] = (((b[j] + x[r,0] wt[0,j]) + x[r,1] wt[1,j]) + ...)``.

    Every row goes through the same instruction sequence, so the result for a
    row does not depend on where it sits in the batch. Built without
    floating-point contraction so it agrees bit-for-bit with the numpy
    fallback.
    """
    cdef Py_ssize_t R = x.shape[0], K = x.shape[1], J = wt.shape[1]
    if wt.shape[0] != K or b.shape[0] != J:
        raise ValueError("affine: shape mismatch")
    out_arr = np.empty((R, J), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, k, j
    cdef double xv, acc
    with nogil:
        if J == 1:
            for r in range(R):
                acc = b[0]
                for k in range(K):
                    acc = acc + x[r, k] * wt[k, 0]
                out[r, 0] = acc
        else:
            for r in range(R):
                for j in range(J):
                    out[r, j] = b[j]
                for k in range(K):
                    xv = x[r, k]
                    for j in range(J):
                        out[r, j] = out[r, j] + xv * wt[k, j]
    return out_arr
