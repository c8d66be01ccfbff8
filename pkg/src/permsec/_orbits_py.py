"""Vectorized numpy implementation of :func:`orbit_table`; used when the
compiled extension is unavailable and as its reference in tests."""

import math

import numpy as np


def orbit_table(alphabet: int, n: int, g: int):
    k = n // g
    base = alphabet**g
    m = alphabet**n
    weights = base ** np.arange(k - 1, -1, -1, dtype=np.int64)
    idx = np.arange(m, dtype=np.int64)
    blocks = (idx[:, None] // weights[None, :]) % base
    blocks = -np.sort(-blocks, axis=1)
    canon = blocks @ weights
    # run position t_j within each run of equal blocks: sum_j log t_j = sum log(r!)
    logrep = np.zeros(m)
    t = np.ones(m)
    for j in range(1, k):
        same = blocks[:, j] == blocks[:, j - 1]
        t = np.where(same, t + 1.0, 1.0)
        logrep += np.log(t)
    logo = (math.lgamma(k + 1) - logrep) / math.log(2.0)
    return canon, logo
