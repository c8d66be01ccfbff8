"""Power normalization and the AWGN, Rayleigh (perfect CSI) and BSC channels.

Signals are real-valued. SNR is measured against unit signal power, so the
noise variance at ``snr_db`` is exactly ``10 ** (-snr_db / 10)``; pass
``math.inf`` for a noiseless link.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("awgn", "rayleigh", "bsc")
_FADE_FLOOR = 1e-12


def noise_variance(snr_db: float) -> float:
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def normalize_power(X: np.ndarray) -> np.ndarray:
    """Scale ``X`` to unit mean square; an all-zero input is returned as is."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("cannot normalize an empty tensor")
    ms = np.mean(X * X)
    if ms == 0.0:
        return X.copy()
    return X / math.sqrt(ms)


def normalize_power_backward(X: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. ``X`` given its gradient w.r.t. ``normalize_power(X)``."""
    X = np.asarray(X, dtype=float)
    ms = np.mean(X * X)
    if ms == 0.0:
        return grad_out.copy()
    r = math.sqrt(ms)
    # out = X / r with r = sqrt(mean(X^2)); d r / d X = X / (size * r)
    return grad_out / r - X * (np.sum(grad_out * X) / (X.size * r**3))


def transmit_awgn(X: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    var = noise_variance(snr_db)
    X = np.asarray(X, dtype=float)
    if var == 0.0:
        return X.copy()
    return X + rng.normal(0.0, math.sqrt(var), size=X.shape)


def draw_fade(rng: np.random.Generator) -> float:
    """Rayleigh magnitude with unit second moment, redrawn below the floor."""
    while True:
        h = rng.rayleigh(scale=1.0 / math.sqrt(2.0))
        if h >= _FADE_FLOOR:
            return float(h)


def transmit_rayleigh(X: np.ndarray, snr_db: float, rng: np.random.Generator,
                      return_fade: bool = False):
    """Block fading: one ``h`` per tensor, equalized with perfect CSI.

    The receiver sees ``h*X + n`` and divides by ``h``, so the output is
    ``X + n/h``.
    """
    X = np.asarray(X, dtype=float)
    h = draw_fade(rng)
    var = noise_variance(snr_db)
    if var == 0.0:
        Y = X.copy()
    else:
        raw = h * X + rng.normal(0.0, math.sqrt(var), size=X.shape)
        Y = raw / h
    return (Y, h) if return_fade else Y


def transmit_bsc(bits: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability must lie in [0, 1], got {p}")
    bits = np.asarray(bits).astype(np.uint8)
    if np.any(bits > 1):
        raise ValueError("BSC input must be binary")
    flips = rng.random(bits.shape) < p
    return bits ^ flips.astype(np.uint8)


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def bsc_capacity(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability must lie in [0, 1], got {p}")
    return 1.0 - binary_entropy(p)


def awgn_capacity(snr_db: float) -> float:
    """Real-valued AWGN capacity in bits per channel use."""
    var = noise_variance(snr_db)
    if var == 0.0:
        return math.inf
    return 0.5 * math.log2(1.0 + 1.0 / var)


@dataclass(frozen=True)
class ChannelModel:
    kind: str = "awgn"
    snr_db: float | None = 10.0
    flip_prob: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.kind == "bsc":
            if self.flip_prob is None or self.snr_db is not None:
                raise ValueError("bsc takes a flip probability and no SNR")
            if not 0.0 <= self.flip_prob <= 1.0:
                raise ValueError("flip probability must lie in [0, 1]")
        else:
            if self.snr_db is None or self.flip_prob is not None:
                raise ValueError(f"{self.kind} takes an SNR and no flip probability")
            if math.isnan(self.snr_db) or self.snr_db == -math.inf:
                raise ValueError("SNR must be finite or +inf")

    @classmethod
    def from_flags(cls, kind: str, snr: float | None = None, p: float | None = None) -> "ChannelModel":
        if kind == "bsc":
            return cls("bsc", None, 0.1 if p is None else p)
        return cls(kind, 10.0 if snr is None else snr, None)

    def with_snr(self, snr_db: float) -> "ChannelModel":
        return ChannelModel(self.kind, snr_db, None)

    def transmit(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "awgn":
            return transmit_awgn(X, self.snr_db, rng)
        if self.kind == "rayleigh":
            return transmit_rayleigh(X, self.snr_db, rng)
        return transmit_bsc(X, self.flip_prob, rng)

    def capacity(self) -> float:
        if self.kind == "bsc":
            return bsc_capacity(self.flip_prob)
        if self.kind == "awgn":
            return awgn_capacity(self.snr_db)
        raise ValueError("closed-form capacity is only provided for awgn and bsc")


def transmit_batch(model: ChannelModel, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Transmit each leading-axis entry of ``X`` as its own block.

    AWGN and BSC are memoryless so this equals ``model.transmit``; Rayleigh
    draws an independent fade for every message.
    """
    if model.kind != "rayleigh":
        return model.transmit(X, rng)
    X = np.asarray(X, dtype=float)
    var = noise_variance(model.snr_db)
    h = np.array([draw_fade(rng) for _ in range(X.shape[0])])
    if var == 0.0:
        return X.copy()
    h = h.reshape((-1,) + (1,) * (X.ndim - 1))
    raw = h * X + rng.normal(0.0, math.sqrt(var), size=X.shape)
    return raw / h
