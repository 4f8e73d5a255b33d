"""Forward/backward kernels for small 1D convolutional networks.

Every op is a pair ``*_forward(...) -> (out, cache)`` and
``*_backward(dout, cache) -> grads``. Arrays keep the dtype they come in with:
models run in float32, gradient checks in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from shapecond.errors import DegenerateError, ShapeError

LEAKY_SLOPE = 0.01
STRANS_EPS = 1e-8


class Tensor:
    """A parameter array with an accumulated gradient of the same shape."""

    def __init__(self, data, dtype=None):
        self.data = np.array(data, dtype=dtype if dtype is not None else np.asarray(data).dtype)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad.fill(0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


@dataclass
class BNLayerState:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def create(cls, channels: int, dtype=np.float32, momentum=0.1, eps=1e-5) -> "BNLayerState":
        return cls(
            Tensor(np.ones(channels, dtype=dtype)),
            Tensor(np.zeros(channels, dtype=dtype)),
            np.zeros(channels, dtype=dtype),
            np.ones(channels, dtype=dtype),
            momentum,
            eps,
        )


# -- convolution ---------------------------------------------------------------


def conv1d_forward(x, w, b, stride: int = 1, padding: int = 0):
    B, C, L = x.shape
    C_out, C_in, K = w.shape
    if C != C_in:
        raise ShapeError(f"conv1d expects {C_in} input channels, got {C}")
    if L + 2 * padding < K:
        raise ShapeError(f"conv1d kernel {K} longer than padded input {L + 2 * padding}")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    L_out = (L + 2 * padding - K) // stride + 1
    win = sliding_window_view(xp, K, axis=2)[:, :, ::stride][:, :, :L_out]
    cols = win.transpose(0, 2, 1, 3).reshape(B * L_out, C * K)
    wmat = w.reshape(C_out, C * K)
    out = (cols @ wmat.T + b).reshape(B, L_out, C_out).transpose(0, 2, 1)
    cache = (x.shape, xp.shape, cols, w, stride, padding, L_out)
    return np.ascontiguousarray(out), cache


def conv1d_backward(dout, cache):
    x_shape, xp_shape, cols, w, stride, padding, L_out = cache
    B, C, L = x_shape
    C_out, _, K = w.shape
    d2 = dout.transpose(0, 2, 1).reshape(B * L_out, C_out)
    dw = (d2.T @ cols).reshape(w.shape)
    db = dout.sum(axis=(0, 2))
    dcols = (d2 @ w.reshape(C_out, C * K)).reshape(B, L_out, C, K)
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    span = stride * (L_out - 1) + 1
    for k in range(K):
        dxp[:, :, k : k + span : stride] += dcols[:, :, :, k].transpose(0, 2, 1)
    dx = dxp[:, :, padding : padding + L] if padding else dxp
    return np.ascontiguousarray(dx), dw, db


# -- normalization -------------------------------------------------------------


def batchnorm_forward(x, state: BNLayerState, mode: str = "train"):
    """Batch normalization over (batch, time) per channel.

    ``mode``: ``train`` normalizes with batch statistics and updates the running
    estimates; ``eval`` uses the running estimates; ``batch`` uses batch
    statistics but leaves the running estimates untouched (frozen teacher).
    Batch mean/variance are returned in the cache for statistics matching.
    """
    B, C, L = x.shape
    if C != state.gamma.shape[0]:
        raise ShapeError(f"batchnorm expects {state.gamma.shape[0]} channels, got {C}")
    g = state.gamma.data.reshape(1, C, 1)
    beta = state.beta.data.reshape(1, C, 1)
    if mode == "eval":
        std = np.sqrt(state.running_var + state.eps).reshape(1, C, 1)
        xhat = (x - state.running_mean.reshape(1, C, 1)) / std
        return g * xhat + beta, {"mode": mode, "xhat": xhat, "std": std, "gamma": g}
    if mode not in ("train", "batch"):
        raise ValueError(f"unknown batchnorm mode {mode!r}")
    m = B * L
    if m < 2:
        raise DegenerateError("batchnorm in train mode needs at least two values per channel")
    mean = x.mean(axis=(0, 2))
    var = x.var(axis=(0, 2))
    std = np.sqrt(var + state.eps).reshape(1, C, 1)
    xhat = (x - mean.reshape(1, C, 1)) / std
    if mode == "train":
        mom = state.momentum
        state.running_mean[...] = (1 - mom) * state.running_mean + mom * mean
        state.running_var[...] = (1 - mom) * state.running_var + mom * var * (m / (m - 1))
    cache = {"mode": mode, "x": x, "xhat": xhat, "std": std, "gamma": g, "mean": mean, "var": var, "m": m}
    return g * xhat + beta, cache


def batchnorm_backward(dout, cache, dmean=None, dvar=None):
    """Gradients w.r.t. input, gamma, beta.

    ``dmean``/``dvar`` are optional upstream gradients on the batch mean and
    (biased) variance, used when a loss depends on the batch statistics.
    """
    xhat, std, g = cache["xhat"], cache["std"], cache["gamma"]
    dgamma = (dout * xhat).sum(axis=(0, 2))
    dbeta = dout.sum(axis=(0, 2))
    dxhat = dout * g
    if cache["mode"] == "eval":
        return dxhat / std, dgamma, dbeta
    m = cache["m"]
    dx = (dxhat - dxhat.mean(axis=(0, 2), keepdims=True) - xhat * (dxhat * xhat).mean(axis=(0, 2), keepdims=True)) / std
    if dmean is not None:
        dx = dx + dmean.reshape(1, -1, 1) / m
    if dvar is not None:
        centered = cache["x"] - cache["mean"].reshape(1, -1, 1)
        dx = dx + dvar.reshape(1, -1, 1) * 2.0 * centered / m
    return dx.astype(dout.dtype, copy=False), dgamma, dbeta


def _group_norm_forward(x, gamma, beta, axes, eps):
    mean = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    std = np.sqrt(var + eps)
    xhat = (x - mean) / std
    g = gamma.reshape(1, -1, 1)
    out = g * xhat + beta.reshape(1, -1, 1)
    return out, {"xhat": xhat, "std": std, "gamma": g, "axes": axes}


def _group_norm_backward(dout, cache):
    xhat, std, g, axes = cache["xhat"], cache["std"], cache["gamma"], cache["axes"]
    dgamma = (dout * xhat).sum(axis=(0, 2))
    dbeta = dout.sum(axis=(0, 2))
    dxhat = dout * g
    dx = (dxhat - dxhat.mean(axis=axes, keepdims=True) - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True)) / std
    return dx, dgamma, dbeta


def instancenorm_forward(x, gamma, beta, eps: float = 1e-5):
    """Per-sample, per-channel normalization over time, with a per-channel affine."""
    if x.shape[2] < 2:
        raise DegenerateError("instance norm needs at least two time steps")
    return _group_norm_forward(x, gamma, beta, (2,), eps)


def instancenorm_backward(dout, cache):
    return _group_norm_backward(dout, cache)


def layernorm_forward(x, gamma, beta, eps: float = 1e-5):
    """Per-sample normalization over (channels, time), with a per-channel affine."""
    return _group_norm_forward(x, gamma, beta, (1, 2), eps)


def layernorm_backward(dout, cache):
    return _group_norm_backward(dout, cache)


# -- activations ---------------------------------------------------------------


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def leaky_relu_forward(x, slope: float = LEAKY_SLOPE):
    scale = np.where(x > 0, 1.0, slope).astype(x.dtype)
    return x * scale, scale


def leaky_relu_backward(dout, scale):
    return dout * scale


def sigmoid_forward(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out, out


def sigmoid_backward(dout, out):
    return dout * out * (1 - out)


# -- pooling -------------------------------------------------------------------


def maxpool1d_forward(x, kernel: int = 2, stride: int = 2):
    B, C, L = x.shape
    if L < kernel:
        raise ShapeError(f"maxpool kernel {kernel} longer than input {L}")
    L_out = (L - kernel) // stride + 1
    win = sliding_window_view(x, kernel, axis=2)[:, :, ::stride][:, :, :L_out]
    idx = np.argmax(win, axis=3)
    out = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
    return out, (x.shape, idx, kernel, stride)


def maxpool1d_backward(dout, cache):
    shape, idx, kernel, stride = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    L_out = idx.shape[2]
    span = stride * (L_out - 1) + 1
    for k in range(kernel):
        dx[:, :, k : k + span : stride] += np.where(idx == k, dout, 0)
    return dx


def avgpool1d_forward(x, kernel: int = 2, stride: int = 2):
    B, C, L = x.shape
    if L < kernel:
        raise ShapeError(f"avgpool kernel {kernel} longer than input {L}")
    L_out = (L - kernel) // stride + 1
    win = sliding_window_view(x, kernel, axis=2)[:, :, ::stride][:, :, :L_out]
    return win.mean(axis=3), (x.shape, kernel, stride, L_out)


def avgpool1d_backward(dout, cache):
    shape, kernel, stride, L_out = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    span = stride * (L_out - 1) + 1
    for k in range(kernel):
        dx[:, :, k : k + span : stride] += dout / kernel
    return dx


def global_maxpool_forward(x):
    idx = np.argmax(x, axis=2)
    out = np.take_along_axis(x, idx[..., None], axis=2)[..., 0]
    return out, (x.shape, idx)


def global_maxpool_backward(dout, cache):
    shape, idx = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    np.put_along_axis(dx, idx[..., None], dout[..., None], axis=2)
    return dx


# -- dense ---------------------------------------------------------------------


def linear_forward(x, w, b):
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear expects {w.shape[1]} features, got {x.shape[1]}")
    return x @ w.T + b, (x, w)


def linear_backward(dout, cache):
    x, w = cache
    return dout @ w, dout.T @ x, dout.sum(axis=0)


def concat_forward(parts):
    sizes = [p.shape[1] for p in parts]
    return np.concatenate(parts, axis=1), sizes


def concat_backward(dout, sizes):
    return np.split(dout, np.cumsum(sizes)[:-1], axis=1)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, target):
    """Mean cross-entropy and its gradient w.r.t. the logits.

    ``target`` is either integer class ids ``[B]`` or probability vectors ``[B, V]``.
    """
    B, V = logits.shape
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    target = np.asarray(target)
    if target.ndim == 1:
        if target.shape[0] != B:
            raise ShapeError("target count does not match batch size")
        t = np.zeros_like(logits)
        t[np.arange(B), target.astype(np.int64)] = 1
    else:
        if target.shape != logits.shape:
            raise ShapeError(f"soft targets of shape {target.shape} for logits {logits.shape}")
        t = target.astype(logits.dtype, copy=False)
    loss = float(-(t * logp).sum() / B)
    grad = (np.exp(logp) * t.sum(axis=1, keepdims=True) - t) / B
    return loss, grad.astype(logits.dtype, copy=False)


# -- shapelet transform layer --------------------------------------------------


def strans_forward(x, pool, window: int):
    """Constrained shapelet distances ``[B, k]`` for a batch ``[B, C, L]``."""
    B, C, L = x.shape
    if len(pool) == 0:
        raise ShapeError("empty shapelet pool")
    if pool.max_channel >= C:
        raise ShapeError(f"pool references channel {pool.max_channel}, input has {C}")
    feats = np.empty((B, len(pool)), dtype=x.dtype)
    positions = np.empty((B, len(pool)), dtype=np.int64)
    rows = np.arange(B)
    for i, sh in enumerate(pool):
        c = sh.candidate
        if c.length > L:
            raise ShapeError(f"shapelet length {c.length} exceeds series length {L}")
        lo = max(0, min(c.position - window, L - c.length))
        hi = max(lo, min(L - c.length, c.position + window))
        win = sliding_window_view(x[:, c.channel, :], c.length, axis=1)[:, lo : hi + 1]
        d2 = ((win - c.values.astype(x.dtype)) ** 2).sum(axis=2)
        best = np.argmin(d2, axis=1)
        feats[:, i] = np.sqrt(d2[rows, best])
        positions[:, i] = lo + best
    return feats, (x, pool, positions, feats)


def strans_backward(dfeat, cache):
    """Subgradient of min-over-window Euclidean distance; zero at exact matches."""
    x, pool, positions, feats = cache
    dx = np.zeros_like(x)
    rows = np.arange(x.shape[0])[:, None]
    for i, sh in enumerate(pool):
        c = sh.candidate
        idx = positions[:, i][:, None] + np.arange(c.length)
        diff = x[rows, c.channel, idx] - c.values.astype(x.dtype)
        scale = dfeat[:, i] / np.maximum(feats[:, i], STRANS_EPS)
        dx[rows, c.channel, idx] += diff * scale[:, None]
    return dx


# -- optimizer -----------------------------------------------------------------


@dataclass
class AdamW:
    """Adaptive moments with decoupled weight decay (decay applied directly to weights)."""

    params: list
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    _m: list = field(default_factory=list, repr=False)
    _v: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if self.weight_decay:
                p.data -= (self.lr * self.weight_decay) * p.data
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad * p.grad
            p.data -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
