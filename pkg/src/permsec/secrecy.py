"""Secrecy capacity, the training objective, and Eve's rate bound.

Also holds exact enumeration oracles for the block-permutation channel
``U^n -> X^n``, where ``X^n`` is ``U^n`` with its ``n/g`` blocks placed in a
uniformly random order. Two conditional models are provided:

``exact_multiset``
    The physical channel. An input whose blocks repeat has fewer than
    ``(n/g)!`` distinct arrangements, and the output is uniform over the
    distinct ones.

``idealized_rowmodel``
    Every input row of the transition matrix is taken to hold exactly
    ``a = (n/g)!`` entries equal to ``1/a``, so ``H(X^n | U^n) = log2 a``
    for every input. The output marginal is the true shuffled-output
    marginal, which keeps ``H(X^n) <= n log2|X|``. Under this model
    ``I <= n log2|X| - log2 a``, with equality when the output is uniform.

For repeated letters the models disagree: with ``|X| = 2, n = 2, g = 1`` and
uniform input the exact value is 1.5 bits, above the idealized 1.0 bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

LOG2E = 1.0 / math.log(2.0)
BRUTE_FORCE_CAP = 2**20
MODELS = ("exact_multiset", "idealized_rowmodel")


def secrecy_capacity(i_xy: float, i_xz: float, r_k: float) -> float:
    """``I(X;Y) - [I(X;Z) - R_K]^+``."""
    for v in (i_xy, i_xz, r_k):
        if not math.isfinite(v):
            raise ValueError("secrecy_capacity inputs must be finite")
    return i_xy - max(i_xz - r_k, 0.0)


def total_loss(recon_loss: float, r_l: float, c_s: float, alpha: float = 0.01,
               beta: float = 0.01) -> float:
    return recon_loss + alpha * r_l - beta * c_s


@dataclass(frozen=True)
class SecrecyReport:
    i_xy: float
    i_xz: float
    r_k: float
    r_l: float
    c_s: float = float("nan")

    def __post_init__(self):
        if math.isnan(self.c_s):
            object.__setattr__(self, "c_s", secrecy_capacity(self.i_xy, self.i_xz, self.r_k))
        for name in ("i_xy", "i_xz", "r_k", "r_l", "c_s"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if abs(self.c_s - secrecy_capacity(self.i_xy, self.i_xz, self.r_k)) > 1e-12:
            raise ValueError("c_s is inconsistent with i_xy, i_xz and r_k")


def eve_rate_bound(n: int, g: int, alphabet_size: int, p_e: float = 0.0) -> float:
    """Upper bound on Eve's rate through a grain-``g`` shuffle of ``n`` letters.

    ``(1 / (1 - p_e)) * log2(|X| * (e*g)**(1/g) / n**(1/g))`` in bits per
    channel use, without the vanishing correction term. May be negative.
    """
    if n < 1 or g < 1 or n % g:
        raise ValueError(f"grain {g} must divide block length {n}")
    if alphabet_size < 1:
        raise ValueError("alphabet size must be positive")
    if not 0.0 <= p_e < 1.0:
        raise ValueError("error probability must lie in [0, 1)")
    inner = math.log2(alphabet_size) + (math.log2(math.e * g) - math.log2(n)) / g
    return inner / (1.0 - p_e)


def eve_capacity_bound(n: int, g: int, alphabet_size: int, p_e: float = 0.0) -> float:
    """The bound read as a capacity: clamped at zero."""
    return max(0.0, eve_rate_bound(n, g, alphabet_size, p_e))


def log_keyspace_stirling(n: int, g: int = 1) -> float:
    """Stirling estimate of ``log2((n/g)!)``."""
    if n < 1 or g < 1 or n % g:
        raise ValueError(f"grain {g} must divide {n}")
    k = n // g
    return 0.5 * math.log2(2.0 * math.pi * k) + k * math.log2(k / math.e)


def log2_factorial(k: int) -> float:
    return math.lgamma(k + 1) * LOG2E


@dataclass(frozen=True)
class PermChannelSpec:
    """Brute-force permutation channel description.

    ``input_dist`` is ``None`` (uniform over all sequences), a per-letter pmf
    of length ``alphabet`` (i.i.d. letters) or a full pmf of length
    ``alphabet**n`` indexed with the first letter most significant.
    """

    alphabet: int
    n: int
    g: int = 1
    input_dist: tuple[float, ...] | None = None
    model: str = "exact_multiset"

    def __post_init__(self):
        if self.alphabet < 2:
            raise ValueError("alphabet size must be at least 2")
        if self.n < 1 or self.g < 1 or self.n % self.g:
            raise ValueError(f"grain {self.g} must divide block length {self.n}")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.input_dist is not None:
            object.__setattr__(self, "input_dist", tuple(float(p) for p in self.input_dist))

    @property
    def size(self) -> int:
        return self.alphabet**self.n

    def input_pmf(self) -> np.ndarray:
        m = self.size
        if self.input_dist is None:
            return np.full(m, 1.0 / m)
        p = np.asarray(self.input_dist, dtype=float)
        if np.any(p < 0) or not math.isclose(p.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("input distribution must be a pmf")
        if p.size == m:
            return p
        if p.size == self.alphabet:
            joint = np.ones(1)
            for _ in range(self.n):
                joint = np.outer(joint, p).ravel()
            return joint
        raise ValueError(f"input distribution must have {self.alphabet} or {m} entries")


def _entropy_bits(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _brute_force_tables(spec: PermChannelSpec):
    if spec.size > BRUTE_FORCE_CAP:
        raise OverflowError(
            f"state space {spec.alphabet}^{spec.n} exceeds brute-force cap {BRUTE_FORCE_CAP}")
    pu = spec.input_pmf()
    canon, log_orbit = kernels.orbit_table(spec.alphabet, spec.n, spec.g)
    p_orbit = np.bincount(canon, weights=pu, minlength=spec.size)
    px = p_orbit[canon] * np.exp2(-log_orbit)
    return pu, px, log_orbit


def output_distribution(spec: PermChannelSpec) -> np.ndarray:
    """Marginal pmf of the shuffled output ``X^n``."""
    return _brute_force_tables(spec)[1]


def exact_perm_channel_mi(spec: PermChannelSpec) -> float:
    """``I(U^n; X^n)`` in bits under the exact multiset model."""
    pu, px, log_orbit = _brute_force_tables(spec)
    h_x = _entropy_bits(px)
    h_x_given_u = float(np.sum(pu * log_orbit))
    return h_x - h_x_given_u


def idealized_perm_channel_mi(spec: PermChannelSpec) -> float:
    """``I(U^n; X^n)`` in bits under the idealized row model."""
    _, px, _ = _brute_force_tables(spec)
    return _entropy_bits(px) - log2_factorial(spec.n // spec.g)


def perm_channel_mi(spec: PermChannelSpec) -> float:
    if spec.model == "exact_multiset":
        return exact_perm_channel_mi(spec)
    return idealized_perm_channel_mi(spec)


def idealized_upper_bound(alphabet: int, n: int, g: int = 1) -> float:
    """``n log2|X| - log2((n/g)!)``."""
    return n * math.log2(alphabet) - log2_factorial(n // g)
