"""Numpy implementation of :func:`affine`; same rounding sequence as the
compiled kernel, so the two agree bit-for-bit."""

import numpy as np


def affine(x: np.ndarray, wt: np.ndarray, b: np.ndarray) -> np.ndarray:
    if wt.shape[0] != x.shape[1] or b.shape[0] != wt.shape[1]:
        raise ValueError("affine: shape mismatch")
    out = np.empty((x.shape[0], wt.shape[1]))
    out[:] = b
    for k in range(x.shape[1]):
        out += x[:, k : k + 1] * wt[k]
    return out
