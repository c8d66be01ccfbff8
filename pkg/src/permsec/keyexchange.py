"""Diffie-Hellman agreement on a codebook index.

This is a simulation of the index-agreement step over plain integers. It is
not production cryptography: there is no authentication, no protection
against man-in-the-middle attacks, and no parameter hardening.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .shuffle import PermKey, enumerate_keys, keyspace_size, sample_key

# The first 64 primes. Using the first 13 as bases is already deterministic
# below 3.3e24; past that each extra base cuts the error by at least 4x.
_MR_BASES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
    73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151,
    157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233,
    239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311,
)


def is_probable_prime(n: int) -> bool:
    """Miller-Rabin with 64 fixed prime bases."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _prime_factors(n: int) -> list[int]:
    """Distinct prime factors by trial division plus Pollard rho."""
    factors: set[int] = set()

    def rho(m: int) -> int:
        if m % 2 == 0:
            return 2
        c = 1
        while True:
            x = y = 2
            d = 1
            while d == 1:
                x = (x * x + c) % m
                y = (y * y + c) % m
                y = (y * y + c) % m
                d = math.gcd(abs(x - y), m)
            if d != m:
                return d
            c += 1

    def split(m: int) -> None:
        if m == 1:
            return
        if is_probable_prime(m):
            factors.add(m)
            return
        d = rho(m)
        split(d)
        split(m // d)

    for p in _MR_BASES[:25]:
        if n % p == 0:
            factors.add(p)
            while n % p == 0:
                n //= p
    split(n)
    return sorted(factors)


def is_primitive_root(g: int, p: int) -> bool:
    if not 1 < g < p:
        return False
    phi = p - 1
    return all(pow(g, phi // q, p) != 1 for q in _prime_factors(phi))


@dataclass(frozen=True)
class DhParams:
    """Public group parameters: prime modulus ``P`` and generator ``G``."""

    P: int
    G: int
    check_generator: bool = True

    def __post_init__(self):
        if not is_probable_prime(self.P):
            raise ValueError(f"P={self.P} is not prime")
        if not 1 < self.G < self.P:
            raise ValueError("G must satisfy 1 < G < P")
        if self.check_generator and not is_primitive_root(self.G, self.P):
            raise ValueError(f"G={self.G} is not a primitive root of {self.P}")


def random_params(bits: int, rng: np.random.Generator) -> DhParams:
    """Random prime of the given bit length with a random primitive root."""
    while True:
        cand = int.from_bytes(rng.bytes((bits + 7) // 8), "big")
        cand |= (1 << (bits - 1)) | 1
        cand &= (1 << bits) - 1
        if is_probable_prime(cand):
            break
    factors = _prime_factors(cand - 1)
    while True:
        g = 2 + int.from_bytes(rng.bytes(16), "big") % (cand - 3)
        if all(pow(g, (cand - 1) // q, cand) != 1 for q in factors):
            return DhParams(cand, g, check_generator=False)


def random_private(params: DhParams, rng: np.random.Generator) -> int:
    """Uniform private exponent in ``[1, P-2]``."""
    span = params.P - 2
    nbytes = (span.bit_length() + 7) // 8 + 8
    return 1 + int.from_bytes(rng.bytes(nbytes), "big") % span


def _check_private(params: DhParams, private: int) -> None:
    if not 1 <= private < params.P - 1:
        raise ValueError(f"private exponent must lie in [1, P-2], got {private}")


def dh_public(params: DhParams, private: int) -> int:
    _check_private(params, private)
    return pow(params.G, private, params.P)


def dh_shared(params: DhParams, private: int, peer_public: int) -> int:
    _check_private(params, private)
    if not 1 <= peer_public < params.P:
        raise ValueError(f"peer public value must lie in [1, P-1], got {peer_public}")
    return pow(peer_public, private, params.P)


@dataclass(frozen=True)
class Codebook:
    """Ordered index -> key table; the list position is the index."""

    keys: tuple[PermKey, ...]

    def __post_init__(self):
        keys = tuple(self.keys)
        object.__setattr__(self, "keys", keys)
        if keys:
            sig = (keys[0].shape, keys[0].grain_row, keys[0].grain_col)
            for k in keys[1:]:
                if (k.shape, k.grain_row, k.grain_col) != sig:
                    raise ValueError("codebook keys must share one shape and grain")

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def entries(self) -> list[tuple[int, PermKey]]:
        return list(enumerate(self.keys))

    def save(self, path) -> None:
        Path(path).write_text("".join(k.to_text() + "\n" for k in self.keys))

    @classmethod
    def load(cls, path) -> "Codebook":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        return cls(tuple(PermKey.from_text(ln) for ln in lines))


def lookup(book: Codebook, shared: int) -> PermKey:
    """Key at index ``shared mod len(book)``."""
    if len(book) == 0:
        raise ValueError("codebook is empty")
    return book.keys[shared % len(book)]


def build_codebook(shape, grains=(1, 1), count: int = 1, rng_seed=0, mode: str = "row+col") -> Codebook:
    """Sample ``count`` keys, without replacement when the keyspace allows."""
    if count < 1:
        raise ValueError("codebook needs at least one entry")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    space = keyspace_size(shape, grains, mode)
    if count > space:
        return Codebook(tuple(sample_key(shape, grains, rng, mode) for _ in range(count)))
    if space <= 4 * count and space <= 100_000:
        every = list(enumerate_keys(shape, grains, mode))
        pick = rng.permutation(len(every))[:count]
        return Codebook(tuple(every[i] for i in pick))
    seen: set[PermKey] = set()
    keys = []
    while len(keys) < count:
        k = sample_key(shape, grains, rng, mode)
        if k not in seen:
            seen.add(k)
            keys.append(k)
    return Codebook(tuple(keys))


@dataclass
class Handshake:
    params: DhParams
    a: int
    b: int
    A: int
    B: int
    shared_alice: int
    shared_bob: int
    index_alice: int
    index_bob: int

    @property
    def agreed(self) -> bool:
        return self.index_alice == self.index_bob


def handshake(params: DhParams, book_size: int, rng: np.random.Generator, a=None, b=None,
              tamper_public: bool = False) -> Handshake:
    """Run both sides of the exchange.

    ``tamper_public`` replaces Bob's public value in transit (a corrupted
    channel) so that the resulting mismatch can be detected.
    """
    a = random_private(params, rng) if a is None else a
    b = random_private(params, rng) if b is None else b
    A = dh_public(params, a)
    B = dh_public(params, b)
    B_seen = B
    if tamper_public:
        B_seen = B % (params.P - 1) + 1
    s_a = dh_shared(params, a, B_seen)
    s_b = dh_shared(params, b, A)
    return Handshake(params, a, b, A, B, s_a, s_b, s_a % book_size, s_b % book_size)
