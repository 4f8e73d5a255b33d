"""Shapelet-augmented teacher: training, frozen inference and checkpoints.

Checkpoint layout: a UTF-8 manifest terminated by ``#end-manifest\\n``, then the
raw little-endian float64 values of every array listed in the manifest.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable

import numpy as np

from shapecond.data import Dataset
from shapecond.errors import FormatError, IntegrityError, ShapeError
from shapecond.models import DEFAULT_ARCH, Arch, ConvNet
from shapecond.shapelets import ShapeletPool, load_pool
from shapecond.training import TrainConfig, TrainHistory, train_network

log = logging.getLogger(__name__)

MAGIC = "#shapecond-teacher v1"
END = "#end-manifest"


class TeacherModel(ConvNet):
    """ConvNet whose classifier reads ``[encoder features, shapelet distances]``."""

    pool_path: str | None = None
    history: TrainHistory | None = None
    label_names: tuple[str, ...] = ()


def teacher_forward(model: ConvNet, x, mode: str = "eval") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None]
    return model.forward(x, mode)


def train_teacher(
    d: Dataset,
    pool: ShapeletPool,
    cfg: TrainConfig,
    arch: Arch = DEFAULT_ARCH,
    window: int | None = None,
    val: Dataset | None = None,
) -> TeacherModel:
    model = TeacherModel(arch, d.channels, d.n_classes, pool, window, seed=cfg.seed)
    if pool is not None and pool.max_channel >= d.channels:
        raise ShapeError("shapelet pool references a channel the dataset does not have")
    model.label_names = d.label_names
    val_pair = (val.X, val.y) if val is not None else None
    model.history = train_network(model, d.X, d.y, cfg, val_pair)
    log.info("teacher trained: final loss %.5f", model.history.loss[-1] if model.history.loss else float("nan"))
    model.freeze()
    return model


def save_teacher(model: ConvNet, path, pool_path, comments: Iterable[str] = ()) -> None:
    pool_hash = model.pool.content_hash() if model.pool is not None else ""
    arrays = model.state_arrays()
    lines = [
        MAGIC,
        "arch " + json.dumps(model.arch.to_dict(), sort_keys=True),
        f"in_channels {model.in_channels}",
        f"n_classes {model.n_classes}",
        f"window {model.window}",
        f"dtype {model.dtype.name}",
        f"bn {json.dumps([[st.momentum, st.eps] for st in model.bn_states])}",
        f"pool_path {pool_path}",
        f"pool_sha256 {pool_hash}",
        "labels\t" + "\t".join(getattr(model, "label_names", ())),
    ]
    lines += [f"# {c}" for c in comments]
    offset = 0
    for name, arr in arrays.items():
        shape = "x".join(str(s) for s in arr.shape)
        lines.append(f"param {name} {shape} {offset}")
        offset += arr.size * 8
    lines.append(END)
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8") + blob)


def _resolve_pool_path(stored: str, ckpt: Path) -> Path:
    p = Path(stored)
    if p.exists() or p.is_absolute():
        return p
    alt = ckpt.parent / p
    return alt if alt.exists() else p


def load_teacher(path, pool_path=None) -> TeacherModel:
    """Read a checkpoint; the pool file must hash to the value recorded at save time."""
    path = Path(path)
    raw = path.read_bytes()
    marker = ("\n" + END + "\n").encode()
    cut = raw.find(marker)
    if not raw.startswith(MAGIC.encode()) or cut < 0:
        raise FormatError(f"{path}: not a teacher checkpoint or manifest truncated")
    manifest = raw[:cut].decode("utf-8").split("\n")
    blob = raw[cut + len(marker) :]
    meta, params, labels = {}, [], ()
    for line in manifest[1:]:
        if line.startswith("#"):
            continue
        if line.startswith("labels\t") or line == "labels":
            labels = tuple(line.split("\t")[1:])
            continue
        key, _, value = line.partition(" ")
        if key == "param":
            name, shape, offset = value.split(" ")
            params.append((name, tuple(int(s) for s in shape.split("x") if s), int(offset)))
        else:
            meta[key] = value
    try:
        arch = Arch(**json.loads(meta["arch"]))
        in_channels, n_classes = int(meta["in_channels"]), int(meta["n_classes"])
        window = int(meta["window"])
        dtype = np.dtype(meta["dtype"])
        bn = json.loads(meta["bn"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"{path}: malformed manifest ({exc})") from None

    pool = None
    stored_hash = meta.get("pool_sha256", "")
    if stored_hash:
        src = Path(pool_path) if pool_path is not None else _resolve_pool_path(meta.get("pool_path", ""), path)
        pool = load_pool(src)
        if pool.content_hash() != stored_hash:
            raise IntegrityError(f"pool file {src} does not match the checkpoint's pool hash")
        pool_ref = str(src)
    else:
        pool_ref = None

    model = TeacherModel(arch, in_channels, n_classes, pool, window, dtype=dtype)
    model.pool_path = pool_ref
    model.label_names = labels
    arrays = {}
    for name, shape, offset in params:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise FormatError(f"{path}: truncated parameter data ({name})")
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(dtype)
    expected = sum(8 * int(np.prod(s)) for _, s, _ in params)
    if len(blob) != expected:
        raise FormatError(f"{path}: parameter block has {len(blob)} bytes, expected {expected}")
    try:
        model.load_state_arrays(arrays)
    except ShapeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    for st, (momentum, eps) in zip(model.bn_states, bn):
        st.momentum, st.eps = momentum, eps
    model.freeze()
    return model
