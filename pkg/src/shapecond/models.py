"""Configurable 1D CNN with an optional shapelet-transform branch.

The backbone is ``depth`` blocks of conv -> norm -> activation -> pool, reduced
by a global max over time. When a shapelet pool is attached, the constrained
shapelet distances of the raw input are concatenated with the encoder output
before the linear classifier.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from shapecond import nn
from shapecond.errors import ShapeError
from shapecond.nn import BNLayerState, Tensor
from shapecond.shapelets import ShapeletPool

NORMS = ("none", "batch", "instance", "layer")
ACTIVATIONS = ("relu", "leaky", "sigmoid")
POOLINGS = ("none", "max", "mean")


@dataclass(frozen=True)
class Arch:
    depth: int = 3
    width: int = 32
    norm: str = "batch"
    activation: str = "relu"
    pooling: str = "max"
    kernel: int = 5

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"invalid architecture {self}")
        if self.norm not in NORMS or self.activation not in ACTIVATIONS or self.pooling not in POOLINGS:
            raise ValueError(f"invalid architecture {self}")

    @property
    def name(self) -> str:
        return f"d{self.depth}-w{self.width}-{self.norm}-{self.activation}-{self.pooling}"

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_ARCH = Arch()


class ConvNet:
    def __init__(
        self,
        arch: Arch,
        in_channels: int,
        n_classes: int,
        pool: ShapeletPool | None = None,
        window: int | None = None,
        seed: int = 0,
        dtype=np.float32,
    ):
        self.arch = arch
        self.in_channels = in_channels
        self.n_classes = n_classes
        self.pool = pool if pool is not None and len(pool) else None
        self.window = window if window is not None else (pool.window if pool is not None else 0)
        self.dtype = np.dtype(dtype)
        self.frozen = False
        self.params: dict[str, Tensor] = {}
        self.bn_states: list[BNLayerState] = []
        self._norm_params: list = []
        self._cache = None

        rng = np.random.default_rng(seed)
        c_in = in_channels
        K = arch.kernel
        for b in range(arch.depth):
            bound = 1.0 / np.sqrt(c_in * K)
            self.params[f"conv{b}.weight"] = Tensor(rng.uniform(-bound, bound, (arch.width, c_in, K)), self.dtype)
            self.params[f"conv{b}.bias"] = Tensor(rng.uniform(-bound, bound, arch.width), self.dtype)
            if arch.norm == "batch":
                st = BNLayerState.create(arch.width, self.dtype)
                self.bn_states.append(st)
                self.params[f"norm{b}.gamma"], self.params[f"norm{b}.beta"] = st.gamma, st.beta
                self._norm_params.append(st)
            elif arch.norm in ("instance", "layer"):
                g = Tensor(np.ones(arch.width), self.dtype)
                be = Tensor(np.zeros(arch.width), self.dtype)
                self.params[f"norm{b}.gamma"], self.params[f"norm{b}.beta"] = g, be
                self._norm_params.append((g, be))
            else:
                self._norm_params.append(None)
            c_in = arch.width
        fan_in = arch.width + self.n_shapelets
        bound = 1.0 / np.sqrt(fan_in)
        self.params["fc.weight"] = Tensor(rng.uniform(-bound, bound, (n_classes, fan_in)), self.dtype)
        self.params["fc.bias"] = Tensor(rng.uniform(-bound, bound, n_classes), self.dtype)

    @property
    def n_shapelets(self) -> int:
        return len(self.pool) if self.pool is not None else 0

    @property
    def encoder_dim(self) -> int:
        return self.arch.width

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Every persistent array: parameters plus batch-norm running statistics."""
        out = {name: t.data for name, t in self.params.items()}
        for b, st in enumerate(self.bn_states):
            out[f"norm{b}.running_mean"] = st.running_mean
            out[f"norm{b}.running_var"] = st.running_var
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        own = self.state_arrays()
        if set(own) != set(arrays):
            raise ShapeError("state arrays do not match the architecture")
        for name, target in own.items():
            if target.shape != arrays[name].shape:
                raise ShapeError(f"{name}: expected shape {target.shape}, got {arrays[name].shape}")
            target[...] = arrays[name]

    def freeze(self) -> None:
        for arr in self.state_arrays().values():
            arr.flags.writeable = False
        self.frozen = True

    def zero_shapelet_branch(self) -> None:
        """Zero the classifier columns that read the shapelet features."""
        w = self.params["fc.weight"].data
        writeable = w.flags.writeable
        w.flags.writeable = True
        w[:, self.encoder_dim :] = 0
        w.flags.writeable = writeable

    def forward(self, x, mode: str = "eval"):
        """Logits ``[B, V]``. ``mode`` is ``train``, ``eval`` or ``batch`` (see batchnorm)."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"expected input [B, {self.in_channels}, L], got {x.shape}")
        if mode == "train" and self.frozen:
            raise RuntimeError("frozen model cannot run in train mode")
        arch = self.arch
        blocks = []
        h = x
        for b in range(arch.depth):
            rec = {}
            h, rec["conv"] = nn.conv1d_forward(
                h, self.params[f"conv{b}.weight"].data, self.params[f"conv{b}.bias"].data, 1, arch.kernel // 2
            )
            norm = self._norm_params[b]
            if arch.norm == "batch":
                h, rec["norm"] = nn.batchnorm_forward(h, norm, mode)
            elif arch.norm == "instance":
                h, rec["norm"] = nn.instancenorm_forward(h, norm[0].data, norm[1].data)
            elif arch.norm == "layer":
                h, rec["norm"] = nn.layernorm_forward(h, norm[0].data, norm[1].data)
            if arch.activation == "relu":
                h, rec["act"] = nn.relu_forward(h)
            elif arch.activation == "leaky":
                h, rec["act"] = nn.leaky_relu_forward(h)
            else:
                h, rec["act"] = nn.sigmoid_forward(h)
            if arch.pooling != "none" and h.shape[2] >= 2:
                if arch.pooling == "max":
                    h, rec["pool"] = nn.maxpool1d_forward(h, 2, 2)
                else:
                    h, rec["pool"] = nn.avgpool1d_forward(h, 2, 2)
            blocks.append(rec)
        enc, gmp = nn.global_maxpool_forward(h)
        strans = None
        if self.pool is not None:
            feats, strans = nn.strans_forward(x, self.pool, self.window)
            z, sizes = nn.concat_forward([enc, feats])
        else:
            z, sizes = enc, None
        logits, fc = nn.linear_forward(z, self.params["fc.weight"].data, self.params["fc.bias"].data)
        self._cache = {"blocks": blocks, "gmp": gmp, "strans": strans, "sizes": sizes, "fc": fc, "mode": mode}
        return logits

    def batch_stats(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-BN-layer batch (mean, biased variance) from the last non-eval forward."""
        if self._cache is None or self._cache["mode"] == "eval":
            raise RuntimeError("batch statistics need a preceding train/batch-mode forward")
        return [(rec["norm"]["mean"], rec["norm"]["var"]) for rec in self._cache["blocks"] if "mean" in rec.get("norm", {})]

    def running_stats(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(st.running_mean, st.running_var) for st in self.bn_states]

    def backward(self, dlogits, bn_grads=None, param_grads: bool = True, input_grad: bool = True):
        """Backpropagate ``dlogits``; accumulates parameter grads and returns d(input).

        ``bn_grads`` optionally holds one ``(dmean, dvar)`` pair per batch-norm
        layer: gradients of an extra loss term w.r.t. the batch statistics.
        """
        cache = self._cache
        if cache is None:
            raise RuntimeError("backward called before forward")
        arch = self.arch
        dz, dw, db = nn.linear_backward(dlogits, cache["fc"])
        if param_grads:
            self.params["fc.weight"].grad += dw
            self.params["fc.bias"].grad += db
        dx_strans = None
        if cache["sizes"] is not None:
            denc, dfeat = nn.concat_backward(dz, cache["sizes"])
            if input_grad:
                dx_strans = nn.strans_backward(dfeat, cache["strans"])
        else:
            denc = dz
        dh = nn.global_maxpool_backward(denc, cache["gmp"])
        bn_i = len(self.bn_states)
        for b in reversed(range(arch.depth)):
            rec = cache["blocks"][b]
            if "pool" in rec:
                if arch.pooling == "max":
                    dh = nn.maxpool1d_backward(dh, rec["pool"])
                else:
                    dh = nn.avgpool1d_backward(dh, rec["pool"])
            if arch.activation == "relu":
                dh = nn.relu_backward(dh, rec["act"])
            elif arch.activation == "leaky":
                dh = nn.leaky_relu_backward(dh, rec["act"])
            else:
                dh = nn.sigmoid_backward(dh, rec["act"])
            if arch.norm != "none":
                if arch.norm == "batch":
                    bn_i -= 1
                    extra = bn_grads[bn_i] if bn_grads is not None else None
                    dmean, dvar = extra if extra is not None else (None, None)
                    dh, dg, dbeta = nn.batchnorm_backward(dh, rec["norm"], dmean, dvar)
                elif arch.norm == "instance":
                    dh, dg, dbeta = nn.instancenorm_backward(dh, rec["norm"])
                else:
                    dh, dg, dbeta = nn.layernorm_backward(dh, rec["norm"])
                if param_grads:
                    self.params[f"norm{b}.gamma"].grad += dg
                    self.params[f"norm{b}.beta"].grad += dbeta
            if b == 0 and not input_grad:
                dc_w, dc_b = _conv_param_grads(dh, rec["conv"])
                dh = None
            else:
                dh, dc_w, dc_b = nn.conv1d_backward(dh, rec["conv"])
            if param_grads:
                self.params[f"conv{b}.weight"].grad += dc_w
                self.params[f"conv{b}.bias"].grad += dc_b
        if not input_grad:
            return None
        return dh + dx_strans if dx_strans is not None else dh

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def predict_logits(self, X, batch_size: int = 512) -> np.ndarray:
        out = [self.forward(X[i : i + batch_size], "eval") for i in range(0, len(X), batch_size)]
        return np.concatenate(out) if out else np.empty((0, self.n_classes), dtype=self.dtype)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_logits(X), axis=1)


def _conv_param_grads(dout, cache):
    x_shape, xp_shape, cols, w, stride, padding, L_out = cache
    B = x_shape[0]
    C_out = w.shape[0]
    d2 = dout.transpose(0, 2, 1).reshape(B * L_out, C_out)
    return (d2.T @ cols).reshape(w.shape), dout.sum(axis=(0, 2))
