"""Minimal neural-network engine on numpy.

Just the pieces the WER regressor needs: dense, 1-D convolution with
"same" zero padding, embedding lookup, global max pooling over time,
inverted dropout, MSE loss, Adam, finite-difference gradient checking,
and a binary checkpoint format. Layers cache their forward activations
and consume them in backward; parameters are ``Tensor`` objects holding
data and an accumulated gradient of the same shape.

Training runs in float32. Gradient checking requires float64 parameters
(build the fragment with ``dtype=np.float64``).
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

CHECKPOINT_MAGIC = b"EWER2CKPT"
CHECKPOINT_VERSION = 1

__all__ = [
    "Tensor",
    "Layer",
    "Dense",
    "Conv1d",
    "Embedding",
    "GlobalMaxPool",
    "Dropout",
    "Chain",
    "mse_loss",
    "Adam",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
]


class Tensor:
    """Dense n-dimensional parameter with a gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = np.asarray(data)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad[...] = 0


def _he_uniform(rng: np.random.Generator, fan_in: int, shape, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _apply_activation(z: np.ndarray, activation: str):
    """Returns (output, cache-for-backward)."""
    if activation == "none":
        return z, None
    if activation == "relu":
        return np.maximum(z, 0.0), z > 0
    if activation == "sigmoid":
        out = 1.0 / (1.0 + np.exp(-z))
        return out, out
    raise ValueError(f"unknown activation {activation!r}")


def _activation_backward(dy: np.ndarray, activation: str, cache) -> np.ndarray:
    if activation == "none":
        return dy
    if activation == "relu":
        return dy * cache
    return dy * cache * (1.0 - cache)  # sigmoid


class Layer:
    """Forward/backward contract shared by every layer.

    ``backward`` must be called with the gradient of the loss w.r.t. the
    most recent ``forward`` output; it accumulates into parameter grads
    and returns the gradient w.r.t. its input.
    """

    def params(self) -> list[tuple[str, Tensor]]:
        return []

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Dense(Layer):
    """Affine layer y = act(x @ W + b)."""

    def __init__(self, n_in: int, n_out: int, activation: str = "none", *,
                 rng: np.random.Generator, dtype=np.float32):
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        if activation == "relu":
            w = _he_uniform(rng, n_in, (n_in, n_out), dtype)
        else:
            w = _xavier_uniform(rng, n_in, n_out, (n_in, n_out), dtype)
        self.W = Tensor(w)
        self.b = Tensor(np.zeros(n_out, dtype=dtype))
        self._x = None
        self._act_cache = None

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def forward(self, x, train: bool = False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(
                f"dense layer expects (B, {self.n_in}) input, got {x.shape}"
            )
        self._x = x
        z = x @ self.W.data + self.b.data
        y, self._act_cache = _apply_activation(z, self.activation)
        return y

    def backward(self, dy):
        dz = _activation_backward(dy, self.activation, self._act_cache)
        self.W.grad += self._x.T @ dz
        self.b.grad += dz.sum(axis=0)
        return dz @ self.W.data.T


class Conv1d(Layer):
    """1-D cross-correlation over (B, C_in, T) with "same" zero padding.

    Output length is ceil(T / stride); the input is padded with
    total = (out - 1) * stride + kernel - T zeros, split left/right with
    the smaller share on the left.
    """

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1,
                 activation: str = "none", *, rng: np.random.Generator, dtype=np.float32):
        if kernel < 1 or stride < 1:
            raise ValueError(f"kernel and stride must be >= 1, got {kernel}, {stride}")
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.stride = stride
        self.activation = activation
        if activation == "relu":
            w = _he_uniform(rng, c_in * kernel, (c_out, c_in, kernel), dtype)
        else:
            w = _xavier_uniform(rng, c_in * kernel, c_out, (c_out, c_in, kernel), dtype)
        self.W = Tensor(w)
        self.b = Tensor(np.zeros(c_out, dtype=dtype))
        self._cache = None

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def forward(self, x, train: bool = False):
        if x.ndim != 3 or x.shape[1] != self.c_in:
            raise ValueError(
                f"conv1d expects (B, {self.c_in}, T) input, got {x.shape}"
            )
        batch, _, t_in = x.shape
        t_out = -(-t_in // self.stride)
        pad_total = max((t_out - 1) * self.stride + self.kernel - t_in, 0)
        pad_left = pad_total // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad_left, pad_total - pad_left)))
        starts = np.arange(t_out) * self.stride
        # (B, C, T_out, k) gather, flattened for one GEMM
        cols = xp[:, :, starts[:, None] + np.arange(self.kernel)[None, :]]
        colsmat = cols.transpose(0, 2, 1, 3).reshape(batch * t_out, self.c_in * self.kernel)
        wmat = self.W.data.reshape(self.c_out, -1)
        z = (colsmat @ wmat.T + self.b.data).reshape(batch, t_out, self.c_out)
        z = z.transpose(0, 2, 1)
        y, act_cache = _apply_activation(z, self.activation)
        self._cache = (colsmat, starts, pad_left, x.shape, xp.shape, act_cache)
        return y

    def backward(self, dy):
        colsmat, starts, pad_left, x_shape, xp_shape, act_cache = self._cache
        batch, _, t_in = x_shape
        dz = _activation_backward(dy, self.activation, act_cache)
        t_out = dz.shape[2]
        dzmat = dz.transpose(0, 2, 1).reshape(batch * t_out, self.c_out)
        wmat = self.W.data.reshape(self.c_out, -1)
        self.W.grad += (dzmat.T @ colsmat).reshape(self.W.shape)
        self.b.grad += dzmat.sum(axis=0)
        dcols = (dzmat @ wmat).reshape(batch, t_out, self.c_in, self.kernel)
        dcols = dcols.transpose(0, 2, 1, 3)  # (B, C, T_out, k)
        dxp = np.zeros(xp_shape, dtype=dcols.dtype)
        for j in range(self.kernel):
            # positions within one tap are distinct, so += is safe
            dxp[:, :, starts + j] += dcols[:, :, :, j]
        return dxp[:, :, pad_left : pad_left + t_in]


class Embedding(Layer):
    """Row lookup into a (V, E) table; gradients scatter into used rows."""

    def __init__(self, n_vocab: int, dim: int, *, rng: np.random.Generator, dtype=np.float32):
        self.n_vocab = n_vocab
        self.dim = dim
        self.table = Tensor(_xavier_uniform(rng, n_vocab, dim, (n_vocab, dim), dtype))
        self._ids = None

    def params(self):
        return [("table", self.table)]

    def forward(self, ids, train: bool = False):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_vocab):
            raise ValueError(
                f"embedding id out of range [0, {self.n_vocab}): "
                f"min {ids.min()}, max {ids.max()}"
            )
        self._ids = ids
        return self.table.data[ids]

    def backward(self, dy):
        np.add.at(self.table.grad, self._ids.reshape(-1), dy.reshape(-1, self.dim))
        return None


class GlobalMaxPool(Layer):
    """Per-channel max over time: (B, C, T) -> (B, C).

    On ties the gradient routes to the first maximal position.
    """

    def forward(self, x, train: bool = False):
        if x.ndim != 3 or x.shape[2] < 1:
            raise ValueError(f"global max pool expects (B, C, T>=1), got {x.shape}")
        self._argmax = x.argmax(axis=2)
        self._shape = x.shape
        self._dtype = x.dtype
        return np.take_along_axis(x, self._argmax[:, :, None], axis=2)[:, :, 0]

    def backward(self, dy):
        dx = np.zeros(self._shape, dtype=self._dtype)
        np.put_along_axis(dx, self._argmax[:, :, None], dy[:, :, None], axis=2)
        return dx


class Dropout(Layer):
    """Inverted dropout: identity in eval mode, survivors scaled in train."""

    def __init__(self, rate: float, *, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self._mask = None

    def forward(self, x, train: bool = False):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) >= self.rate).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


class Chain(Layer):
    """Sequential composition of layers."""

    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)

    def params(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"{i}.{name}", t) for name, t in layer.params())
        return out

    def forward(self, x, train: bool = False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. ``pred``."""
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} != param shape {p.data.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def grad_check(fragment, x, target: np.ndarray, epsilon: float = 1e-4) -> float:
    """Compare analytic gradients with central finite differences.

    ``fragment`` follows the Layer protocol (forward/backward/params)
    and must be built in float64; the loss is MSE against ``target``.
    Every parameter element is perturbed, so keep fragments tiny.

    Returns the maximum relative error over all parameter elements.
    """
    named = fragment.params()
    for name, p in named:
        if p.data.dtype != np.float64:
            raise ValueError(f"gradient checking requires float64 parameters ({name} is {p.data.dtype})")
        p.zero_grad()

    pred = fragment.forward(x, train=False)
    _, dpred = mse_loss(pred, target)
    fragment.backward(dpred)
    analytic = {name: p.grad.copy() for name, p in named}

    def loss_at() -> float:
        loss, _ = mse_loss(fragment.forward(x, train=False), target)
        return loss

    max_rel = 0.0
    for name, p in named:
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            loss_plus = loss_at()
            flat[i] = orig - epsilon
            loss_minus = loss_at()
            flat[i] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            if not np.isfinite(numeric) or not np.isfinite(a_flat[i]):
                raise ValueError(f"non-finite gradient while checking {name}[{i}]")
            rel = abs(a_flat[i] - numeric) / max(1e-8, abs(a_flat[i]) + abs(numeric))
            max_rel = max(max_rel, rel)
    return max_rel


def save_checkpoint(path, named_params: Sequence[tuple[str, np.ndarray]]) -> None:
    """Write named arrays as little-endian float32 records."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        for name, arr in named_params:
            arr = np.asarray(arr)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> list[tuple[str, np.ndarray]]:
    """Read back records written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    try:
        offset = len(CHECKPOINT_MAGIC)
        (version,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        records: list[tuple[str, np.ndarray]] = []
        while offset < len(blob):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape)
            offset += 4 * count
            records.append((name, data.astype(np.float32)))
    except (struct.error, UnicodeDecodeError) as exc:
        raise ValueError(f"{path}: truncated or corrupt checkpoint") from exc
    return records
