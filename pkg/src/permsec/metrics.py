"""Reconstruction metrics: sentence BLEU, PSNR, MSE and token accuracy."""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

import numpy as np


def _ngrams(tokens: Sequence[int], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[int], reference: Sequence[int], max_n: int = 4) -> float:
    """Sentence BLEU, uniform weights over 1..max_n, no smoothing.

    Any order with zero clipped matches makes the score 0.
    """
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be between 1 and 4")
    candidate = [int(t) for t in candidate]
    reference = [int(t) for t in reference]
    if not candidate or not reference:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand = _ngrams(candidate, n)
        total = sum(cand.values())
        if total == 0:
            return 0.0
        ref = _ngrams(reference, n)
        clipped = sum(min(c, ref[g]) for g, c in cand.items())
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    c, r = len(candidate), len(reference)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / max_n)


def mse(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(reference, reconstruction, peak: float = 1.0) -> float:
    """PSNR in dB; identical inputs give ``math.inf``."""
    err = mse(reference, reconstruction)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def token_accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty sequences")
    return float(np.mean(pred == truth))


def mean_bleu(cands, refs, max_n: int = 1) -> float:
    return float(np.mean([bleu(c, r, max_n) for c, r in zip(cands, refs)]))
