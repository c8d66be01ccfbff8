"""Token-wise dense networks with exact reverse-mode gradients and Adam.

Tensors are plain ``numpy`` arrays. A network maps the last axis and treats
every leading index (message, row) independently, so it commutes with any
permutation of rows. That is what lets the row shuffle sit before or after
an encoder without changing the result.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels

ACTIVATIONS = ("identity", "relu", "tanh")
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}

MAGIC = b"PSEC"
VERSION = 1


class StateError(RuntimeError):
    """Operation called in the wrong order (e.g. backward before forward)."""


def affine(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``x @ W.T + b`` over the last axis with a fixed per-row summation order.

    BLAS matrix products round differently depending on where a row sits in
    the batch, which would make row shuffles commute with a network only up
    to the last bit. This kernel computes every row the same way.
    """
    lead = x.shape[:-1]
    x2 = np.ascontiguousarray(x, dtype=float).reshape(-1, x.shape[-1])
    out = kernels.affine(x2, np.ascontiguousarray(W.T), b)
    return out.reshape(*lead, W.shape[0])


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    return 1.0 - a * a


class DenseLayer:
    def __init__(self, W: np.ndarray, b: np.ndarray, activation: str = "identity"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        W = np.array(W, dtype=float)
        b = np.array(b, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError(f"bad layer parameter shapes {W.shape}, {b.shape}")
        self.W = W
        self.b = b
        self.activation = activation
        self.dW = np.zeros_like(W)
        self.db = np.zeros_like(b)
        self._x = None
        self._z = None
        self._a = None

    @classmethod
    def init(cls, n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> "DenseLayer":
        limit = np.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, size=(n_out, n_in)), np.zeros(n_out), activation)

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = affine(x, self.W, self.b)
        a = _act(self.activation, z)
        self._x, self._z, self._a = x, z, a
        return a

    def backward(self, grad_out: np.ndarray, accumulate: bool = False) -> np.ndarray:
        if self._x is None:
            raise StateError("backward called before forward")
        gz = grad_out * _act_grad(self.activation, self._z, self._a)
        x2 = self._x.reshape(-1, self.n_in)
        g2 = gz.reshape(-1, self.n_out)
        dW = g2.T @ x2
        db = g2.sum(axis=0)
        if accumulate:
            self.dW += dW
            self.db += db
        else:
            self.dW = dW
            self.db = db
        return gz @ self.W


class MlpNetwork:
    """Stack of dense layers applied to the last axis, plus Adam state."""

    def __init__(self, layers: Sequence[DenseLayer]):
        layers = list(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer dims do not chain: {a.n_out} -> {b.n_in}")
        self.layers = layers
        self.step_count = 0
        self._m = [np.zeros_like(p) for p in self.parameters()]
        self._v = [np.zeros_like(p) for p in self.parameters()]
        self._ran_forward = False

    @classmethod
    def build(cls, dims: Sequence[int], activations: Sequence[str] | str,
              rng: np.random.Generator) -> "MlpNetwork":
        """``dims = (in, h1, ..., out)``; one activation per layer."""
        if isinstance(activations, str):
            activations = [activations] * (len(dims) - 1)
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        return cls([DenseLayer.init(i, o, act, rng)
                    for i, o, act in zip(dims[:-1], dims[1:], activations)])

    @classmethod
    def identity(cls, dim: int, depth: int = 1) -> "MlpNetwork":
        return cls([DenseLayer(np.eye(dim), np.zeros(dim)) for _ in range(depth)])

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.dW, layer.db]
        return out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def forward(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        if U.shape[-1] != self.n_in:
            raise ValueError(f"input width {U.shape[-1]} does not match network input {self.n_in}")
        h = U
        for layer in self.layers:
            h = layer.forward(h)
        self._ran_forward = True
        return h

    __call__ = forward

    def predict(self, U: np.ndarray) -> np.ndarray:
        """Forward pass that leaves the backward cache untouched."""
        h = np.asarray(U, dtype=float)
        for layer in self.layers:
            h = _act(layer.activation, affine(h, layer.W, layer.b))
        return h

    def backward(self, upstream_grad: np.ndarray, accumulate: bool = False) -> np.ndarray:
        """Backpropagate ``dLoss/dOutput``; fills gradients, returns ``dLoss/dInput``."""
        if not self._ran_forward:
            raise StateError("backward called before forward")
        g = np.asarray(upstream_grad, dtype=float)
        for layer in reversed(self.layers):
            g = layer.backward(g, accumulate=accumulate)
        return g

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.dW[...] = 0.0
            layer.db[...] = 0.0

    def adam_step(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> "MlpNetwork":
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - beta1**t
        c2 = 1.0 - beta2**t
        for p, g, m, v in zip(self.parameters(), self.gradients(), self._m, self._v):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        return self

    def copy(self) -> "MlpNetwork":
        net = MlpNetwork([DenseLayer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])
        net.step_count = self.step_count
        net._m = [m.copy() for m in self._m]
        net._v = [v.copy() for v in self._v]
        return net

    def save(self, path) -> None:
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path) -> "MlpNetwork":
        return load_checkpoint(path)


def adam_step(net: MlpNetwork, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> MlpNetwork:
    return net.adam_step(lr, beta1, beta2, eps)


def save_checkpoint(net: MlpNetwork, path) -> None:
    """Binary checkpoint: ``PSEC``, u16 version, u32 layer count, then per
    layer u32 in, u32 out, u8 activation code, W (out*in) and b as
    little-endian float32."""
    buf = bytearray(MAGIC)
    buf += struct.pack("<HI", VERSION, len(net.layers))
    for layer in net.layers:
        buf += struct.pack("<IIB", layer.n_in, layer.n_out, _ACT_CODES[layer.activation])
        buf += layer.W.astype("<f4").tobytes()
        buf += layer.b.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path) -> MlpNetwork:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError("not a PSEC checkpoint")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 10
    layers = []
    for _ in range(count):
        n_in, n_out, code = struct.unpack_from("<IIB", data, off)
        off += 9
        W = np.frombuffer(data, "<f4", n_in * n_out, off).reshape(n_out, n_in)
        off += 4 * n_in * n_out
        b = np.frombuffer(data, "<f4", n_out, off)
        off += 4 * n_out
        layers.append(DenseLayer(W.astype(float), b.astype(float), ACTIVATIONS[code]))
    if off != len(data):
        raise ValueError("trailing bytes in checkpoint")
    return MlpNetwork(layers)


LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def squared_loss(target: np.ndarray) -> LossFn:
    target = np.asarray(target, dtype=float)

    def loss(out: np.ndarray):
        d = out - target
        return float(np.sum(d * d)), 2.0 * d

    return loss


def _relu_pattern(net: MlpNetwork, x: np.ndarray) -> list[np.ndarray]:
    pats = []
    h = x
    for layer in net.layers:
        z = affine(h, layer.W, layer.b)
        if layer.activation == "relu":
            pats.append(z > 0.0)
        h = _act(layer.activation, z)
    return pats


def finite_diff_check(net: MlpNetwork, x: np.ndarray, loss: LossFn, eps: float = 1e-5,
                      grads: list[np.ndarray] | None = None) -> float:
    """Max relative gap between backprop gradients and central differences.

    Relative gap per coordinate is ``|a - n| / (|a| + |n| + 1e-12)``.
    Coordinates whose perturbation flips a ReLU unit are skipped, since the
    loss is not differentiable there. Gaps below the rounding error of the
    central difference itself (about ``eps_mach * |loss| / eps``) count as
    agreement; otherwise an exactly-zero gradient would score as a total
    mismatch. ``grads`` overrides the analytic gradients (used to check that
    corrupted gradients are caught).
    """
    x = np.asarray(x, dtype=float)
    if grads is None:
        out = net.forward(x)
        _, g_out = loss(out)
        net.backward(g_out)
        grads = [g.copy() for g in net.gradients()]
    has_relu = any(l.activation == "relu" for l in net.layers)
    worst = 0.0
    for p, g in zip(net.parameters(), grads):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = loss(net.predict(x))
            pat_p = _relu_pattern(net, x) if has_relu else None
            flat[i] = orig - eps
            lm, _ = loss(net.predict(x))
            pat_m = _relu_pattern(net, x) if has_relu else None
            flat[i] = orig
            if has_relu and any(np.any(a != b) for a, b in zip(pat_p, pat_m)):
                continue
            num = (lp - lm) / (2.0 * eps)
            ana = gflat[i]
            floor = 16.0 * np.finfo(float).eps * max(abs(lp), abs(lm), 1.0) / eps
            if abs(ana - num) <= floor:
                continue
            worst = max(worst, abs(ana - num) / (abs(ana) + abs(num) + 1e-12))
    return worst
