"""Mutual information neural estimation with the Donsker-Varadhan bound.

The bound ``E_joint[T] - ln E_marginal[e^T]`` is computed in nats.
Marginal samples come from shuffling ``y`` within the batch. Critic
gradients use an exponential moving average of ``E[e^T]`` in the
denominator; the reported bound itself is the plain batch estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .neural import MlpNetwork

CLAMP = 50.0
NATS_TO_BITS = 1.0 / math.log(2.0)


class MineDivergence(FloatingPointError):
    pass


def to_bits(nats: float) -> float:
    return nats * NATS_TO_BITS


def _flat(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a.reshape(a.shape[0], -1) if a.ndim != 2 else a


def _logmeanexp(t: np.ndarray) -> float:
    top = float(np.max(t))
    return top + math.log(float(np.mean(np.exp(t - top))))


@dataclass
class MineCritic:
    net: MlpNetwork
    x_dim: int
    y_dim: int
    ema_rate: float = 0.99
    ema_denominator: float | None = None
    trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.net.n_in != self.x_dim + self.y_dim:
            raise ValueError("critic input width must equal dim(x) + dim(y)")
        if self.net.n_out != 1:
            raise ValueError("critic must output a scalar")

    @classmethod
    def build(cls, x_dim: int, y_dim: int, rng: np.random.Generator, hidden=(64, 64),
              activation: str = "relu") -> "MineCritic":
        dims = (x_dim + y_dim, *hidden, 1)
        acts = [activation] * len(hidden) + ["identity"]
        return cls(MlpNetwork.build(dims, acts, rng), x_dim, y_dim)

    def scores(self, pairs: np.ndarray) -> np.ndarray:
        return self.net.predict(pairs)[:, 0]

    def copy(self) -> "MineCritic":
        return MineCritic(self.net.copy(), self.x_dim, self.y_dim, self.ema_rate,
                          self.ema_denominator, list(self.trace))


def pairs(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x, y = _flat(x), _flat(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"batch sizes differ: {x.shape[0]} vs {y.shape[0]}")
    return np.concatenate([x, y], axis=1)


def marginal_pairs(x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    y = _flat(y)
    return pairs(x, y[rng.permutation(y.shape[0])])


def dv_bound(critic: MineCritic, joint_batch: np.ndarray, marginal_batch: np.ndarray) -> float:
    """Donsker-Varadhan lower bound in nats."""
    joint_batch = np.asarray(joint_batch, dtype=float)
    marginal_batch = np.asarray(marginal_batch, dtype=float)
    if joint_batch.shape[0] == 0 or marginal_batch.shape[0] == 0:
        raise ValueError("empty batch")
    t_joint = critic.scores(joint_batch)
    t_marg = np.clip(critic.scores(marginal_batch), -CLAMP, CLAMP)
    return float(np.mean(t_joint)) - _logmeanexp(t_marg)


def estimate_mi(critic: MineCritic, x, y, rng: np.random.Generator) -> float:
    """DV bound in nats on aligned samples with a fresh marginal shuffle."""
    return dv_bound(critic, pairs(x, y), marginal_pairs(x, y, rng))


def _upstream(critic: MineCritic, t_joint: np.ndarray, t_marg_raw: np.ndarray,
              use_ema: bool) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradient of the bound w.r.t. the joint and marginal critic outputs."""
    t_marg = np.clip(t_marg_raw, -CLAMP, CLAMP)
    e = np.exp(t_marg)
    batch_mean = float(np.mean(e))
    if use_ema:
        if critic.ema_denominator is None:
            critic.ema_denominator = batch_mean
        else:
            r = critic.ema_rate
            critic.ema_denominator = r * critic.ema_denominator + (1.0 - r) * batch_mean
        denom = critic.ema_denominator
    else:
        denom = batch_mean
    g_joint = np.full(t_joint.shape, 1.0 / t_joint.size)
    g_marg = -e / (t_marg.size * denom)
    g_marg[np.abs(t_marg_raw) > CLAMP] = 0.0
    bound = float(np.mean(t_joint)) - _logmeanexp(t_marg)
    return g_joint, g_marg, bound


def mine_step(critic: MineCritic, x, y, rng: np.random.Generator, lr: float = 5e-5) -> float:
    """One Adam ascent step on the bound; returns the pre-update batch bound."""
    joint = pairs(x, y)
    marg = marginal_pairs(x, y, rng)
    b = joint.shape[0]
    t = critic.net.forward(np.concatenate([joint, marg], axis=0))[:, 0]
    g_joint, g_marg, bound = _upstream(critic, t[:b], t[b:], use_ema=True)
    if not math.isfinite(bound):
        raise MineDivergence(
            f"DV bound is {bound} at step {critic.net.step_count}; "
            f"joint score range [{t[:b].min()}, {t[:b].max()}], "
            f"marginal score range [{t[b:].min()}, {t[b:].max()}]")
    upstream = -np.concatenate([g_joint, g_marg])[:, None]
    critic.net.backward(upstream)
    critic.net.adam_step(lr)
    critic.trace.append(bound)
    return bound


def train_mine(critic: MineCritic, sampler: Callable[[np.random.Generator], tuple],
               steps: int, lr: float = 5e-5, rng: np.random.Generator | None = None):
    """Maximize the bound on batches drawn from ``sampler(rng)``.

    Returns ``(critic, trace)`` where ``trace`` holds the batch bound (nats)
    seen at each step.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    trace = []
    for _ in range(steps):
        x, y = sampler(rng)
        trace.append(mine_step(critic, x, y, rng, lr))
    return critic, trace


def dv_bound_input_grads(critic: MineCritic, x, y, rng: np.random.Generator):
    """Batch bound (nats) and its gradients w.r.t. ``x`` and ``y``.

    The critic parameters are not updated. Shapes of the returned gradients
    match the flattened inputs.
    """
    x, y = _flat(x), _flat(y)
    b = x.shape[0]
    perm = rng.permutation(b)
    joint = pairs(x, y)
    marg = pairs(x, y[perm])
    t = critic.net.forward(np.concatenate([joint, marg], axis=0))[:, 0]
    g_joint, g_marg, bound = _upstream(critic, t[:b], t[b:], use_ema=False)
    g_in = critic.net.backward(np.concatenate([g_joint, g_marg])[:, None])
    dx = g_in[:b, :critic.x_dim] + g_in[b:, :critic.x_dim]
    dy = g_in[:b, critic.x_dim:].copy()
    dy[perm] += g_in[b:, critic.x_dim:]
    return bound, dx, dy


def estimate_leakage(critic_xz: MineCritic, M_batch, Z_batch,
                     rng: np.random.Generator | None = None) -> float:
    """Per-symbol leakage ``I(M; Z) / n`` in bits.

    Both batches are ``(B, n, ...)``: B messages of n symbols. Each message
    is one sample of the DV bound.
    """
    M = np.asarray(M_batch, dtype=float)
    Z = np.asarray(Z_batch, dtype=float)
    if M.ndim < 2 or Z.ndim < 2:
        raise ValueError("batches must be (B, n, ...)")
    if M.shape[:2] != Z.shape[:2]:
        raise ValueError(f"message batches do not align: {M.shape} vs {Z.shape}")
    n = M.shape[1]
    rng = np.random.default_rng(0) if rng is None else rng
    return to_bits(estimate_mi(critic_xz, M, Z, rng)) / n
