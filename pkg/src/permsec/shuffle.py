"""Permutation keys and their action on feature tensors.

A key holds one permutation per shuffled axis. Each permutation acts on
contiguous blocks of ``grain`` indices: with grain 2 the index set
``0..5`` is split into ``{0,1}, {2,3}, {4,5}`` and only whole blocks move.

Conventions (``P`` is the matrix returned by :func:`to_matrix`):

* rows:    ``out[i] = U[row_perm[i]]``     i.e. ``P_R @ U``
* columns: ``out[:, j] = U[:, col_perm[j]]`` i.e. ``U @ P_C.T``
* filters: ``out[c] = U[filter_perm[c]]``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MODES = ("row", "col", "row+col", "filter", "row+col+filter", "none")

_LOG2 = math.log(2.0)


class ShapeError(ValueError):
    """Tensor shape is incompatible with a key or grain."""


def _check_perm(perm: Sequence[int], name: str) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(len(perm))):
        raise ValueError(f"{name} is not a permutation of 0..{len(perm) - 1}: {perm}")
    return perm


@dataclass(frozen=True)
class PermKey:
    """Row/column (and optional filter) block permutations plus grains."""

    row_perm: tuple[int, ...]
    col_perm: tuple[int, ...]
    filter_perm: tuple[int, ...] | None = None
    grain_row: int = 1
    grain_col: int = 1

    def __post_init__(self):
        object.__setattr__(self, "row_perm", _check_perm(self.row_perm, "row_perm"))
        object.__setattr__(self, "col_perm", _check_perm(self.col_perm, "col_perm"))
        if self.filter_perm is not None:
            object.__setattr__(
                self, "filter_perm", _check_perm(self.filter_perm, "filter_perm")
            )
        if self.grain_row < 1 or self.grain_col < 1:
            raise ValueError("grains must be positive")

    @property
    def n_rows(self) -> int:
        return len(self.row_perm) * self.grain_row

    @property
    def n_cols(self) -> int:
        return len(self.col_perm) * self.grain_col

    @property
    def shape(self) -> tuple[int, ...]:
        if self.filter_perm is None:
            return (self.n_rows, self.n_cols)
        return (len(self.filter_perm), self.n_rows, self.n_cols)

    @classmethod
    def identity(cls, shape, grains=(1, 1)) -> "PermKey":
        c, n, l = _split_shape(shape)
        g_r, g_c = grains
        _check_grains(n, l, g_r, g_c)
        return cls(
            tuple(range(n // g_r)),
            tuple(range(l // g_c)),
            None if c is None else tuple(range(c)),
            g_r,
            g_c,
        )

    def is_identity(self) -> bool:
        perms = [self.row_perm, self.col_perm]
        if self.filter_perm is not None:
            perms.append(self.filter_perm)
        return all(p == tuple(range(len(p))) for p in perms)

    def to_text(self) -> str:
        """Canonical ``g_r,g_c;row:..;col:..[;filter:..]`` form."""
        parts = [
            f"{self.grain_row},{self.grain_col}",
            "row:" + ",".join(map(str, self.row_perm)),
            "col:" + ",".join(map(str, self.col_perm)),
        ]
        if self.filter_perm is not None:
            parts.append("filter:" + ",".join(map(str, self.filter_perm)))
        return ";".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "PermKey":
        fields = text.strip().split(";")
        if len(fields) not in (3, 4):
            raise ValueError(f"malformed key: {text!r}")
        try:
            g_r, g_c = (int(v) for v in fields[0].split(","))
        except ValueError as exc:
            raise ValueError(f"malformed grains in key: {text!r}") from exc
        perms = {}
        for field in fields[1:]:
            name, _, csv = field.partition(":")
            if name not in ("row", "col", "filter") or name in perms:
                raise ValueError(f"malformed key field {field!r}")
            perms[name] = tuple(int(v) for v in csv.split(",")) if csv else ()
        if "row" not in perms or "col" not in perms:
            raise ValueError(f"key needs row and col fields: {text!r}")
        return cls(perms["row"], perms["col"], perms.get("filter"), g_r, g_c)

    def __str__(self) -> str:
        return self.to_text()


def _split_shape(shape) -> tuple[int | None, int, int]:
    shape = tuple(int(s) for s in shape)
    if len(shape) == 2:
        return None, shape[0], shape[1]
    if len(shape) == 3:
        return shape
    raise ShapeError(f"expected (N, L) or (C, N, L), got {shape}")


def _check_grains(n: int, l: int, g_r: int, g_c: int) -> None:
    if g_r < 1 or g_c < 1:
        raise ShapeError("grains must be positive")
    if n % g_r or l % g_c:
        raise ShapeError(f"grains ({g_r}, {g_c}) do not divide shape ({n}, {l})")


def _mode_axes(mode: str) -> tuple[bool, bool, bool]:
    if mode not in MODES:
        raise ValueError(f"unknown shuffle mode {mode!r}; expected one of {MODES}")
    return ("row" in mode, "col" in mode, "filter" in mode)


def sample_key(shape, grains=(1, 1), rng_seed=None, mode: str = "row+col") -> PermKey:
    """Draw a key uniformly from the keyspace induced by ``grains`` and ``mode``.

    ``rng_seed`` may be an integer or a ``numpy.random.Generator``. Axes not
    named in ``mode`` get the identity permutation. A rank-3 shape always
    carries a filter permutation (identity unless the mode shuffles filters).
    """
    c, n, l = _split_shape(shape)
    g_r, g_c = grains
    _check_grains(n, l, g_r, g_c)
    do_row, do_col, do_filter = _mode_axes(mode)
    if do_filter and c is None:
        raise ShapeError("filter shuffling needs a (C, N, L) shape")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    nb_r, nb_c = n // g_r, l // g_c
    row = rng.permutation(nb_r) if do_row else np.arange(nb_r)
    col = rng.permutation(nb_c) if do_col else np.arange(nb_c)
    filt = None
    if c is not None:
        filt = rng.permutation(c) if do_filter else np.arange(c)
    return PermKey(tuple(row), tuple(col), None if filt is None else tuple(filt), g_r, g_c)


def block_indices(perm: Sequence[int], block: int = 1) -> np.ndarray:
    """Expand a block permutation into an element index array."""
    perm = np.asarray(perm, dtype=np.intp)
    return (perm[:, None] * block + np.arange(block)).ravel()


def to_matrix(perm: Sequence[int], block: int = 1) -> np.ndarray:
    """Permutation matrix: identity rows reordered by the expanded ``perm``."""
    idx = block_indices(perm, block)
    return np.eye(idx.size)[idx]


def inverse_perm(perm: Sequence[int]) -> tuple[int, ...]:
    perm = np.asarray(perm, dtype=np.intp)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return tuple(int(i) for i in inv)


def inverse(key: PermKey) -> PermKey:
    """Decryption key: shuffling with it undoes ``key``."""
    return PermKey(
        inverse_perm(key.row_perm),
        inverse_perm(key.col_perm),
        None if key.filter_perm is None else inverse_perm(key.filter_perm),
        key.grain_row,
        key.grain_col,
    )


def _row_axis(U: np.ndarray) -> int:
    if U.ndim < 2:
        raise ShapeError(f"expected a rank-2 or rank-3 tensor, got rank {U.ndim}")
    return U.ndim - 2


def shuffle_rows(U: np.ndarray, key: PermKey) -> np.ndarray:
    """Reorder rows (axis -2) of ``U``; leading batch axes are allowed."""
    U = np.asarray(U)
    if U.ndim < 2 or U.shape[-2] != key.n_rows:
        raise ShapeError(f"tensor with shape {U.shape} does not have {key.n_rows} rows")
    return U[..., block_indices(key.row_perm, key.grain_row), :]


def shuffle_cols(U: np.ndarray, key: PermKey) -> np.ndarray:
    """Reorder columns (last axis) of ``U``."""
    U = np.asarray(U)
    if U.ndim < 2 or U.shape[-1] != key.n_cols:
        raise ShapeError(f"tensor with shape {U.shape} does not have {key.n_cols} columns")
    return U[..., block_indices(key.col_perm, key.grain_col)]


def shuffle_filters(U: np.ndarray, key: PermKey) -> np.ndarray:
    """Reorder filter slices (axis -3) of a (C, N, L) tensor."""
    if key.filter_perm is None:
        raise ShapeError("key has no filter permutation")
    U = np.asarray(U)
    if U.ndim < 3 or U.shape[-3] != len(key.filter_perm):
        raise ShapeError(f"tensor with shape {U.shape} does not have {len(key.filter_perm)} filters")
    return U[..., np.asarray(key.filter_perm, dtype=np.intp), :, :]


def shuffle(U: np.ndarray, key: PermKey) -> np.ndarray:
    """Apply every axis permutation carried by ``key``."""
    out = shuffle_cols(shuffle_rows(U, key), key)
    if key.filter_perm is not None:
        out = shuffle_filters(out, key)
    return out


def unshuffle(U: np.ndarray, key: PermKey) -> np.ndarray:
    """Undo :func:`shuffle` with the same (encryption) key."""
    return shuffle(U, inverse(key))


def keyspace_size(shape, grains=(1, 1), mode: str = "row+col") -> int:
    """Exact number of distinct keys for ``shape``/``grains``/``mode``."""
    c, n, l = _split_shape(shape)
    g_r, g_c = grains
    _check_grains(n, l, g_r, g_c)
    do_row, do_col, do_filter = _mode_axes(mode)
    size = 1
    if do_row:
        size *= math.factorial(n // g_r)
    if do_col:
        size *= math.factorial(l // g_c)
    if do_filter:
        if c is None:
            raise ShapeError("filter shuffling needs a (C, N, L) shape")
        size *= math.factorial(c)
    return size


def log2_keyspace(shape, grains=(1, 1), mode: str = "row+col") -> float:
    """``log2(keyspace_size)`` computed with log-gamma (no big integers)."""
    c, n, l = _split_shape(shape)
    g_r, g_c = grains
    _check_grains(n, l, g_r, g_c)
    do_row, do_col, do_filter = _mode_axes(mode)
    total = 0.0
    if do_row:
        total += math.lgamma(n // g_r + 1)
    if do_col:
        total += math.lgamma(l // g_c + 1)
    if do_filter:
        if c is None:
            raise ShapeError("filter shuffling needs a (C, N, L) shape")
        total += math.lgamma(c + 1)
    return total / _LOG2


def key_rate(shape, grains=(1, 1), data_kind: str = "text_image", mode: str = "row+col") -> float:
    """Key bits per transmitted semantic unit.

    For ``text_image`` the unit is a row (word or patch), so the key length is
    divided by N. For ``audio`` the unit is a sample point and the divisor is
    N*L*C (C = 1 for a rank-2 shape).
    """
    c, n, l = _split_shape(shape)
    bits = log2_keyspace(shape, grains, mode)
    if data_kind == "text_image":
        units = n
    elif data_kind == "audio":
        units = n * l * (1 if c is None else c)
    else:
        raise ValueError(f"unknown data kind {data_kind!r}")
    return bits / units


def enumerate_keys(shape, grains=(1, 1), mode: str = "row+col") -> Iterable[PermKey]:
    """Yield every key of a small keyspace in lexicographic order."""
    from itertools import permutations, product

    c, n, l = _split_shape(shape)
    g_r, g_c = grains
    _check_grains(n, l, g_r, g_c)
    do_row, do_col, do_filter = _mode_axes(mode)
    rows = permutations(range(n // g_r)) if do_row else [tuple(range(n // g_r))]
    cols = permutations(range(l // g_c)) if do_col else [tuple(range(l // g_c))]
    if c is None:
        filters = [None]
    else:
        filters = permutations(range(c)) if do_filter else [tuple(range(c))]
    for r, cc, f in product(list(rows), list(cols), list(filters)):
        yield PermKey(r, cc, f, g_r, g_c)
