"""End-to-end shuffled wiretap system on synthetic data.

Alice: embed -> semantic encoder -> channel encoder -> column shuffle ->
power normalization, with the row shuffle at position ``gamma`` (1: after
the embedding, 2: after the semantic encoder, 3: after the channel encoder).
Bob mirrors this with the inverse key. Eve has Bob's decoder architecture,
the same data and the same channel, but no key.

Every network is token-wise, so the row shuffle commutes with it and the
three positions give the same transmitted tensor.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from . import mine as mine_mod
from .channel import ChannelModel, transmit_batch
from .metrics import bleu, mse, psnr
from .neural import MlpNetwork
from .secrecy import SecrecyReport, secrecy_capacity, total_loss
from .shuffle import PermKey, block_indices, key_rate, sample_key

STREAMS = ("keys", "channel", "eve_channel", "init", "batching", "mine", "eve", "eval")

CSV_HEADER = ("snr_db,channel,mode,bob_mse,bob_acc,bob_bleu1,eve_mse,eve_acc,eve_bleu1,"
              "i_xy,i_xz,r_l,c_s,r_k,seed").split(",")


class DivergenceError(FloatingPointError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Named child stream of the master seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(STREAMS.index(name), *extra))
    return np.random.default_rng(ss)


@dataclass
class SystemConfig:
    data: str = "text"
    n_tokens: int = 16
    vocab: int = 26
    image_size: int = 8
    patch: int = 2
    embed_dim: int = 32
    hidden: int = 32
    code_dim: int = 16
    gamma: int = 1
    mode: str = "row+col"
    grains: tuple[int, int] = (1, 1)
    channel: str = "awgn"
    train_snr_db: float = 10.0
    alpha: float = 0.01
    beta: float = 0.01
    lr: float = 1e-4
    eve_lr: float = 1e-4
    mine_lr: float = 5e-5
    mine_hidden: int = 64
    epochs: int = 50
    batches_per_epoch: int = 200
    batch_size: int = 64
    key_schedule: str = "fresh"
    eve_schedule: str = "interleaved"
    test_messages: int = 1000
    seed: int = 42

    def __post_init__(self):
        self.grains = tuple(int(g) for g in self.grains)
        if self.data not in ("text", "image"):
            raise ValueError(f"unknown data kind {self.data!r}")
        if self.gamma not in (1, 2, 3):
            raise ValueError("gamma must be 1, 2 or 3")
        if self.mode not in ("none", "row", "col", "row+col"):
            raise ValueError(f"unsupported shuffle mode {self.mode!r}")
        if self.key_schedule not in ("fresh", "fixed"):
            raise ValueError("key_schedule must be 'fresh' or 'fixed'")
        if self.eve_schedule not in ("interleaved", "after"):
            raise ValueError("eve_schedule must be 'interleaved' or 'after'")
        if self.channel not in ("awgn", "rayleigh"):
            raise ValueError("the learned pipeline runs over awgn or rayleigh channels")
        if self.data == "image":
            if self.image_size % self.patch:
                raise ValueError("patch must divide image_size")
            self.n_tokens = (self.image_size // self.patch) ** 2
        g_r, g_c = self.grains
        if self.n_tokens % g_r or self.code_dim % g_c:
            raise ValueError("grains must divide (n_tokens, code_dim)")

    @property
    def feature_shape(self) -> tuple[int, int]:
        return (self.n_tokens, self.code_dim)

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch

    @property
    def steps(self) -> int:
        return self.epochs * self.batches_per_epoch

    def channel_model(self, snr_db: float | None = None) -> ChannelModel:
        return ChannelModel(self.channel, self.train_snr_db if snr_db is None else snr_db)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grains"] = list(self.grains)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunRecord:
    snr_db: float
    channel: str
    mode: str
    bob_mse: float
    bob_acc: float
    bob_bleu1: float
    eve_mse: float
    eve_acc: float
    eve_bleu1: float
    i_xy: float
    i_xz: float
    r_l: float
    c_s: float
    r_k: float
    seed: int

    def row(self) -> list[str]:
        out = []
        for name in CSV_HEADER:
            v = getattr(self, name)
            out.append(f"{v:.10g}" if isinstance(v, float) else str(v))
        return out


def records_to_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def append_csv(path, records: Sequence[RunRecord]) -> None:
    from pathlib import Path

    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())


class KeyBatch:
    """Element index arrays for one key per message."""

    def __init__(self, keys: Sequence[PermKey]):
        self.keys = list(keys)
        self.rows = np.stack([block_indices(k.row_perm, k.grain_row) for k in self.keys])
        self.cols = np.stack([block_indices(k.col_perm, k.grain_col) for k in self.keys])
        self.inv_rows = np.argsort(self.rows, axis=1)
        self.inv_cols = np.argsort(self.cols, axis=1)

    def __len__(self):
        return len(self.keys)


def gather_rows(A: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(A, idx[:, :, None], axis=1)


def gather_cols(A: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(A, idx[:, None, :], axis=2)


def normalize_messages(Xt: np.ndarray) -> np.ndarray:
    """Unit mean square per message (leading axis)."""
    r = np.sqrt(np.mean(Xt * Xt, axis=(1, 2), keepdims=True))
    r = np.where(r == 0.0, 1.0, r)
    return Xt / r


def normalize_messages_backward(Xt: np.ndarray, g: np.ndarray) -> np.ndarray:
    size = Xt.shape[1] * Xt.shape[2]
    r = np.sqrt(np.mean(Xt * Xt, axis=(1, 2), keepdims=True))
    r = np.where(r == 0.0, 1.0, r)
    dot = np.sum(g * Xt, axis=(1, 2), keepdims=True)
    return g / r - Xt * dot / (size * r**3)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Decoder:
    channel_dec: MlpNetwork
    semantic_dec: MlpNetwork

    def copy(self) -> "Decoder":
        return Decoder(self.channel_dec.copy(), self.semantic_dec.copy())


@dataclass
class TrainTrace:
    recon: list[float] = field(default_factory=list)
    r_l: list[float] = field(default_factory=list)
    c_s: list[float] = field(default_factory=list)
    i_xy: list[float] = field(default_factory=list)
    i_xz: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    eve_loss: list[float] = field(default_factory=list)


class SecureSystem:
    """Alice, Bob, Eve and the MINE critics for one configuration."""

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        rng = stream(cfg.seed, "init")
        L, H, V = cfg.embed_dim, cfg.hidden, cfg.code_dim
        if cfg.data == "text":
            self.embedding = rng.normal(0.0, 1.0, size=(cfg.vocab, L))
            self.patch_embed = None
            out_dim = L
        else:
            self.embedding = None
            self.patch_embed = MlpNetwork.build((cfg.patch_dim, L), ["identity"], rng)
            out_dim = cfg.patch_dim
        self.alice_sem = MlpNetwork.build((L, H, L), ["relu", "identity"], rng)
        self.alice_ch = MlpNetwork.build((L, H, V), ["relu", "identity"], rng)
        self.bob = Decoder(MlpNetwork.build((V, H, L), ["relu", "identity"], rng),
                           MlpNetwork.build((L, H, out_dim), ["relu", "identity"], rng))
        eve_rng = stream(cfg.seed, "eve")
        self.eve = Decoder(MlpNetwork.build((V, H, L), ["relu", "identity"], eve_rng),
                           MlpNetwork.build((L, H, out_dim), ["relu", "identity"], eve_rng))
        m_rng = stream(cfg.seed, "mine")
        mh = (cfg.mine_hidden, cfg.mine_hidden)
        self.critic_xy = mine_mod.MineCritic.build(V, V, m_rng, mh)
        self.critic_xz = mine_mod.MineCritic.build(V, V, m_rng, mh)
        self.critic_mz = mine_mod.MineCritic.build(self.message_dim, V, m_rng, mh)
        self.r_k = key_rate(cfg.feature_shape, cfg.grains, "text_image", self._keyspace_mode())
        self.fixed_key = sample_key(cfg.feature_shape, cfg.grains, stream(cfg.seed, "keys", 1),
                                    self._sample_mode())
        self.trace = TrainTrace()

    # -- keys ---------------------------------------------------------------
    def _sample_mode(self) -> str:
        return "row+col" if self.cfg.mode == "none" else self.cfg.mode

    def _keyspace_mode(self) -> str:
        return self.cfg.mode

    def draw_keys(self, count: int, rng: np.random.Generator) -> KeyBatch:
        cfg = self.cfg
        if cfg.mode == "none":
            return KeyBatch([PermKey.identity(cfg.feature_shape, cfg.grains)] * count)
        if cfg.key_schedule == "fixed":
            return KeyBatch([self.fixed_key] * count)
        return KeyBatch([sample_key(cfg.feature_shape, cfg.grains, rng, cfg.mode)
                         for _ in range(count)])

    # -- data ---------------------------------------------------------------
    @property
    def message_dim(self) -> int:
        return self.cfg.embed_dim if self.cfg.data == "text" else self.cfg.patch_dim

    def sample_messages(self, count: int, rng: np.random.Generator) -> np.ndarray:
        cfg = self.cfg
        if cfg.data == "text":
            return rng.integers(0, cfg.vocab, size=(count, cfg.n_tokens))
        img = rng.random((count, cfg.image_size, cfg.image_size))
        return images_to_patches(img, cfg.patch)

    def message_features(self, M: np.ndarray) -> np.ndarray:
        """Per-token view of the message used by the leakage critic."""
        if self.cfg.data == "text":
            return self.embedding[M]
        return np.asarray(M, dtype=float)

    # -- Alice --------------------------------------------------------------
    def alice_encode(self, M: np.ndarray, keys: KeyBatch, gamma: int | None = None,
                     cache: bool = False) -> np.ndarray:
        gamma = self.cfg.gamma if gamma is None else gamma
        if gamma not in (1, 2, 3):
            raise ValueError("gamma must be 1, 2 or 3")
        if self.cfg.data == "text":
            U = self.embedding[M]
        else:
            U = self.patch_embed.forward(M) if cache else self.patch_embed.predict(M)
        run = (lambda net, h: net.forward(h)) if cache else (lambda net, h: net.predict(h))
        if gamma == 1:
            U = gather_rows(U, keys.rows)
        T = run(self.alice_sem, U)
        if gamma == 2:
            T = gather_rows(T, keys.rows)
        Xt = run(self.alice_ch, T)
        if gamma == 3:
            Xt = gather_rows(Xt, keys.rows)
        Xt = gather_cols(Xt, keys.cols)
        if cache:
            self._alice_cache = (gamma, keys, Xt)
        return normalize_messages(Xt)

    def _alice_backward(self, gX: np.ndarray) -> None:
        gamma, keys, Xt = self._alice_cache
        g = normalize_messages_backward(Xt, gX)
        g = gather_cols(g, keys.inv_cols)
        if gamma == 3:
            g = gather_rows(g, keys.inv_rows)
        g = self.alice_ch.backward(g)
        if gamma == 2:
            g = gather_rows(g, keys.inv_rows)
        g = self.alice_sem.backward(g)
        if gamma == 1:
            g = gather_rows(g, keys.inv_rows)
        if self.patch_embed is not None:
            self.patch_embed.backward(g)

    def alice_nets(self) -> list[MlpNetwork]:
        nets = [self.alice_sem, self.alice_ch]
        if self.patch_embed is not None:
            nets.insert(0, self.patch_embed)
        return nets

    # -- receivers ----------------------------------------------------------
    def bob_decode(self, Y: np.ndarray, keys: KeyBatch, gamma: int | None = None,
                   cache: bool = False) -> np.ndarray:
        """Bob's reconstruction (embedding-space rows for text, patches for images)."""
        gamma = self.cfg.gamma if gamma is None else gamma
        run = (lambda net, h: net.forward(h)) if cache else (lambda net, h: net.predict(h))
        h = gather_cols(Y, keys.inv_cols)
        if gamma == 3:
            h = gather_rows(h, keys.inv_rows)
        h = run(self.bob.channel_dec, h)
        if gamma == 2:
            h = gather_rows(h, keys.inv_rows)
        h = run(self.bob.semantic_dec, h)
        if gamma == 1:
            h = gather_rows(h, keys.inv_rows)
        if cache:
            self._bob_cache = (gamma, keys)
        return h

    def _bob_backward(self, g: np.ndarray) -> np.ndarray:
        gamma, keys = self._bob_cache
        if gamma == 1:
            g = gather_rows(g, keys.rows)
        g = self.bob.semantic_dec.backward(g)
        if gamma == 2:
            g = gather_rows(g, keys.rows)
        g = self.bob.channel_dec.backward(g)
        if gamma == 3:
            g = gather_rows(g, keys.rows)
        return gather_cols(g, keys.cols)

    def eve_decode(self, Z: np.ndarray, cache: bool = False, decoder: Decoder | None = None) -> np.ndarray:
        dec = self.eve if decoder is None else decoder
        if cache:
            return dec.semantic_dec.forward(dec.channel_dec.forward(Z))
        return dec.semantic_dec.predict(dec.channel_dec.predict(Z))

    def _eve_backward(self, g: np.ndarray) -> None:
        self.eve.channel_dec.backward(self.eve.semantic_dec.backward(g))

    # -- losses and de-embedding -------------------------------------------
    def recon_loss(self, out: np.ndarray, M: np.ndarray) -> tuple[float, np.ndarray]:
        """Cross-entropy over distance logits (text) or MSE (images)."""
        if self.cfg.data == "image":
            d = out - M
            return float(np.mean(d * d)), 2.0 * d / d.size
        E = self.embedding
        logits = 2.0 * out @ E.T - np.sum(E * E, axis=1)
        p = _softmax(logits)
        flat_p = p.reshape(-1, p.shape[-1])
        idx = M.reshape(-1)
        loss = -float(np.mean(np.log(flat_p[np.arange(idx.size), idx] + 1e-300)))
        g = p.copy()
        g.reshape(-1, g.shape[-1])[np.arange(idx.size), idx] -= 1.0
        g /= idx.size
        return loss, 2.0 * g @ E

    def decode_tokens(self, out: np.ndarray) -> np.ndarray:
        """Nearest embedding vector under Euclidean distance."""
        E = self.embedding
        d = np.sum(out * out, axis=-1, keepdims=True) - 2.0 * out @ E.T + np.sum(E * E, axis=1)
        return np.argmin(d, axis=-1)

    # -- training -----------------------------------------------------------
    def _mine_update(self, M, X, Y, Z, rng):
        V = self.cfg.code_dim
        x = X.reshape(-1, V)
        mine_mod.mine_step(self.critic_xy, x, Y.reshape(-1, V), rng, self.cfg.mine_lr)
        mine_mod.mine_step(self.critic_xz, x, Z.reshape(-1, V), rng, self.cfg.mine_lr)
        mine_mod.mine_step(self.critic_mz, self.message_features(M).reshape(-1, self.message_dim),
                           Z.reshape(-1, V), rng, self.cfg.mine_lr)

    def _legit_step(self, M, X, Y, Z, keys, rng) -> float:
        cfg = self.cfg
        V = cfg.code_dim
        out = self.bob_decode(Y, keys, cache=True)
        rec, g_out = self.recon_loss(out, M)
        gY = self._bob_backward(g_out)
        for net in (self.bob.channel_dec, self.bob.semantic_dec):
            net.adam_step(cfg.lr)

        shape = X.shape
        x, y, z = X.reshape(-1, V), Y.reshape(-1, V), Z.reshape(-1, V)
        b = mine_mod.NATS_TO_BITS
        i_xy, gx_xy, gy_xy = mine_mod.dv_bound_input_grads(self.critic_xy, x, y, rng)
        i_xz, gx_xz, gz_xz = mine_mod.dv_bound_input_grads(self.critic_xz, x, z, rng)
        u = self.message_features(M).reshape(-1, self.message_dim)
        r_l, _, gz_mz = mine_mod.dv_bound_input_grads(self.critic_mz, u, z, rng)
        i_xy, i_xz, r_l = i_xy * b, i_xz * b, r_l * b
        c_s = secrecy_capacity(i_xy, i_xz, self.r_k)
        loss = total_loss(rec, r_l, c_s, cfg.alpha, cfg.beta)

        # Y and Z depend on X with unit Jacobian (additive noise after equalization).
        gX = gY.copy()
        g_sec = -cfg.beta * b * (gx_xy + gy_xy)
        if i_xz - self.r_k > 0.0:
            g_sec = g_sec + cfg.beta * b * (gx_xz + gz_xz)
        g_sec = g_sec + cfg.alpha * b * gz_mz
        gX += g_sec.reshape(shape)
        self._alice_backward(gX)
        for net in self.alice_nets():
            net.adam_step(cfg.lr)

        tr = self.trace
        tr.recon.append(rec)
        tr.r_l.append(r_l)
        tr.c_s.append(c_s)
        tr.i_xy.append(i_xy)
        tr.i_xz.append(i_xz)
        tr.loss.append(loss)
        if not math.isfinite(loss):
            raise DivergenceError(f"training loss became {loss} at step {len(tr.loss)}", tr)
        return loss

    def _eve_step(self, M, Z) -> float:
        out = self.eve_decode(Z, cache=True)
        loss, g = self.recon_loss(out, M)
        self._eve_backward(g)
        for net in (self.eve.channel_dec, self.eve.semantic_dec):
            net.adam_step(self.cfg.eve_lr)
        self.trace.eve_loss.append(loss)
        if not math.isfinite(loss):
            raise DivergenceError(f"Eve's loss became {loss}", self.trace)
        return loss

    def _transmit(self, X, ch_rng, eve_rng, model=None):
        model = self.cfg.channel_model() if model is None else model
        return transmit_batch(model, X, ch_rng), transmit_batch(model, X, eve_rng)

    def train(self, steps: int | None = None) -> TrainTrace:
        """Alternate MINE, Alice/Bob and Eve updates per batch."""
        cfg = self.cfg
        steps = cfg.steps if steps is None else steps
        data_rng = stream(cfg.seed, "batching")
        key_rng = stream(cfg.seed, "keys")
        ch_rng = stream(cfg.seed, "channel")
        eve_ch_rng = stream(cfg.seed, "eve_channel")
        mine_rng = stream(cfg.seed, "mine", 1)
        for _ in range(steps):
            M = self.sample_messages(cfg.batch_size, data_rng)
            keys = self.draw_keys(cfg.batch_size, key_rng)
            X = self.alice_encode(M, keys, cache=True)
            Y, Z = self._transmit(X, ch_rng, eve_ch_rng)
            self._mine_update(M, X, Y, Z, mine_rng)
            self._legit_step(M, X, Y, Z, keys, mine_rng)
            if cfg.eve_schedule == "interleaved":
                self._eve_step(M, Z)
        if cfg.eve_schedule == "after":
            self.train_eve(steps)
        return self.trace

    def train_eve(self, steps: int, data_rng=None, key_rng=None, ch_rng=None) -> list[float]:
        """Inversion attack on intercepted (message, observation) pairs."""
        cfg = self.cfg
        data_rng = stream(cfg.seed, "batching", 1) if data_rng is None else data_rng
        key_rng = stream(cfg.seed, "keys", 2) if key_rng is None else key_rng
        ch_rng = stream(cfg.seed, "eve_channel", 1) if ch_rng is None else ch_rng
        losses = []
        model = cfg.channel_model()
        for _ in range(steps):
            M = self.sample_messages(cfg.batch_size, data_rng)
            keys = self.draw_keys(cfg.batch_size, key_rng)
            X = self.alice_encode(M, keys)
            Z = transmit_batch(model, X, ch_rng)
            losses.append(self._eve_step(M, Z))
        return losses

    # -- evaluation ----------------------------------------------------------
    def _receiver_metrics(self, out, M) -> tuple[float, float, float]:
        if self.cfg.data == "text":
            pred = self.decode_tokens(out)
            acc = float(np.mean(pred == M))
            bl = float(np.mean([bleu(p, m, 1) for p, m in zip(pred, M)]))
            return mse(out, self.embedding[M]), acc, bl
        return mse(np.clip(out, 0.0, 1.0), M), math.nan, math.nan

    def evaluate(self, snr_db: float, channel: str | None = None, n_messages: int | None = None,
                 rng: np.random.Generator | None = None, batch: int = 250) -> RunRecord:
        cfg = self.cfg
        channel = cfg.channel if channel is None else channel
        model = ChannelModel(channel, snr_db)
        n_messages = cfg.test_messages if n_messages is None else n_messages
        rng = stream(cfg.seed, "eval") if rng is None else rng
        bob_out, eve_out, Ms = [], [], []
        xs, ys, zs, us = [], [], [], []
        done = 0
        while done < n_messages:
            b = min(batch, n_messages - done)
            M = self.sample_messages(b, rng)
            keys = self.draw_keys(b, rng)
            X = self.alice_encode(M, keys)
            Y = transmit_batch(model, X, rng)
            Z = transmit_batch(model, X, rng)
            bob_out.append(self.bob_decode(Y, keys))
            eve_out.append(self.eve_decode(Z))
            Ms.append(M)
            xs.append(X)
            ys.append(Y)
            zs.append(Z)
            us.append(self.message_features(M))
            done += b
        M = np.concatenate(Ms)
        bob = self._receiver_metrics(np.concatenate(bob_out), M)
        eve = self._receiver_metrics(np.concatenate(eve_out), M)
        V = cfg.code_dim
        x = np.concatenate(xs).reshape(-1, V)
        y = np.concatenate(ys).reshape(-1, V)
        z = np.concatenate(zs).reshape(-1, V)
        u = np.concatenate(us).reshape(-1, self.message_dim)
        to_bits = mine_mod.to_bits
        i_xy = to_bits(mine_mod.estimate_mi(self.critic_xy, x, y, rng))
        i_xz = to_bits(mine_mod.estimate_mi(self.critic_xz, x, z, rng))
        r_l = to_bits(mine_mod.estimate_mi(self.critic_mz, u, z, rng))
        rep = SecrecyReport(i_xy, i_xz, self.r_k, r_l)
        return RunRecord(float(snr_db), channel, cfg.mode, bob[0], bob[1], bob[2],
                         eve[0], eve[1], eve[2], rep.i_xy, rep.i_xz, rep.r_l, rep.c_s,
                         rep.r_k, cfg.seed)


def images_to_patches(img: np.ndarray, patch: int) -> np.ndarray:
    """(B, S, S) -> (B, (S/patch)^2, patch^2), patches in row-major order."""
    B, S, _ = img.shape
    k = S // patch
    return img.reshape(B, k, patch, k, patch).transpose(0, 1, 3, 2, 4).reshape(B, k * k, patch * patch)


def patches_to_images(p: np.ndarray, patch: int) -> np.ndarray:
    B, n, _ = p.shape
    k = int(round(math.sqrt(n)))
    return p.reshape(B, k, k, patch, patch).transpose(0, 1, 3, 2, 4).reshape(B, k * patch, k * patch)


def train_system(cfg: SystemConfig) -> SecureSystem:
    system = SecureSystem(cfg)
    system.train()
    return system


def _eval_point(args):
    system, snr, channel, idx, cidx, n = args
    return system.evaluate(snr, channel, n, stream(system.cfg.seed, "eval", idx, cidx))


def run_sweep(system: SecureSystem, snr_list: Sequence[float], channels: Sequence[str] = ("awgn",),
              n_messages: int | None = None, workers: int = 1) -> list[RunRecord]:
    """One record per (SNR, channel); each point has its own RNG stream.

    Results do not depend on ``workers``.
    """
    jobs = [(system, float(s), ch, i, ci, n_messages)
            for ci, ch in enumerate(channels) for i, s in enumerate(snr_list)]
    if workers <= 1:
        return [_eval_point(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_eval_point, jobs))


def with_overrides(cfg: SystemConfig, **kw) -> SystemConfig:
    return replace(cfg, **kw)


_NET_FILES = ("alice_sem", "alice_ch", "bob.channel_dec", "bob.semantic_dec", "eve.channel_dec",
              "eve.semantic_dec", "critic_xy.net", "critic_xz.net", "critic_mz.net")


def _get_net(system: SecureSystem, dotted: str) -> MlpNetwork:
    obj = system
    for part in dotted.split("."):
        obj = getattr(obj, part)
    return obj


def _set_net(system: SecureSystem, dotted: str, net: MlpNetwork) -> None:
    *head, last = dotted.split(".")
    obj = system
    for part in head:
        obj = getattr(obj, part)
    setattr(obj, last, net)


def save_system(system: SecureSystem, directory) -> None:
    """Write every network as a PSEC checkpoint plus the config and embedding."""
    import json
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "system.json").write_text(json.dumps(system.cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    names = list(_NET_FILES) + (["patch_embed"] if system.patch_embed is not None else [])
    for name in names:
        _get_net(system, name).save(d / f"{name}.psec")
    if system.embedding is not None:
        np.save(d / "embedding.npy", system.embedding)


def load_system(directory) -> SecureSystem:
    """Inverse of ``save_system``; weights come back rounded to float32."""
    import json
    from pathlib import Path

    d = Path(directory)
    cfg = SystemConfig.from_dict(json.loads((d / "system.json").read_text()))
    system = SecureSystem(cfg)
    names = list(_NET_FILES) + (["patch_embed"] if system.patch_embed is not None else [])
    for name in names:
        _set_net(system, name, MlpNetwork.load(d / f"{name}.psec"))
    if system.embedding is not None:
        system.embedding = np.load(d / "embedding.npy")
    return system


def reset_eve(system: SecureSystem, salt: int = 1) -> None:
    """Fresh attacker networks, drawn from a separate child of the eve stream."""
    cfg = system.cfg
    L, H, V = cfg.embed_dim, cfg.hidden, cfg.code_dim
    out_dim = L if cfg.data == "text" else cfg.patch_dim
    rng = stream(cfg.seed, "eve", salt)
    system.eve = Decoder(MlpNetwork.build((V, H, L), ["relu", "identity"], rng),
                         MlpNetwork.build((L, H, out_dim), ["relu", "identity"], rng))
