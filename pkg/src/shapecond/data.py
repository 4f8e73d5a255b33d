"""Time-series classification datasets, condensed sets, and their text formats.

Series are stored channel-major as ``float32`` arrays of shape ``[N, channels, L]``.
Values are written with 9 significant digits, which is enough for ``float32`` to
survive a save/load cycle bit-exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from shapecond.errors import (
    EmptyError,
    FormatError,
    InvariantError,
    ParseError,
    ShapeError,
)

DTYPE = np.float32
SOFT_LABEL_TOL = 1e-6

_DATA_HEADER = re.compile(r"^#channels=(\d+)\s+length=(\d+)\s*$")
_CONDENSED_HEADER = re.compile(
    r"^#shapecond-condensed v1 channels=(\d+) length=(\d+) classes=(\d+)\s*$"
)


def fmt(value: float) -> str:
    return format(float(value), ".9g")


def _parse_floats(tokens: Sequence[str], lineno: int) -> np.ndarray:
    try:
        values = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"line {lineno}: non-numeric value ({exc})") from None
    if not np.all(np.isfinite(values)):
        raise ParseError(f"line {lineno}: missing or non-finite value")
    return values


@dataclass(eq=False)
class Dataset:
    """Labeled collection of equal-length multichannel series.

    ``y`` holds dense class ids in ``[0, V)``; ``label_names[i]`` is the original
    label string of class ``i``.
    """

    X: np.ndarray
    y: np.ndarray
    label_names: tuple[str, ...]

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=DTYPE)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.label_names = tuple(str(s) for s in self.label_names)
        if self.X.ndim != 3:
            raise ShapeError(f"expected [N, channels, L] array, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ShapeError("label vector does not match number of series")
        if self.X.shape[1] < 1 or self.X.shape[2] < 1:
            raise ShapeError("series need at least one channel and one sample")
        if not np.all(np.isfinite(self.X)):
            raise InvariantError("series contain non-finite values")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= len(self.label_names)):
            raise InvariantError("label id outside [0, V)")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def channels(self) -> int:
        return self.X.shape[1]

    @property
    def length(self) -> int:
        return self.X.shape[2]

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def __len__(self) -> int:
        return self.n

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.X[index], self.y[index], self.label_names)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.label_names == other.label_names
            and self.X.shape == other.X.shape
            and self.X.tobytes() == other.X.tobytes()
            and np.array_equal(self.y, other.y)
        )


def load_dataset(path, label_names: Sequence[str] | None = None) -> Dataset:
    """Read a dataset TSV.

    The ``#channels=<c> length=<L>`` header is optional; without it the file is
    read as univariate with the length of its first row. A ``#labels`` line fixes
    the class-id order, otherwise ids follow first appearance. ``label_names``
    overrides both, which keeps test splits aligned with their training split.
    """
    channels = length = None
    declared: list[str] | None = None
    labels: list[str] = []
    rows: list[np.ndarray] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                m = _DATA_HEADER.match(line)
                if m and not rows and channels is None:
                    channels, length = int(m.group(1)), int(m.group(2))
                    if channels < 1 or length < 1:
                        raise FormatError(f"line {lineno}: invalid header {line!r}")
                elif line.startswith("#labels\t") and declared is None:
                    declared = line.split("\t")[1:]
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise FormatError(f"line {lineno}: row has no values")
            if channels is None:
                channels, length = 1, len(parts) - 1
            if len(parts) - 1 != channels * length:
                raise FormatError(
                    f"line {lineno}: expected {channels * length} values, got {len(parts) - 1}"
                )
            labels.append(parts[0])
            rows.append(_parse_floats(parts[1:], lineno))
    if not rows:
        raise EmptyError(f"{path}: no series")

    order = list(label_names) if label_names is not None else declared
    if order is None:
        order = list(dict.fromkeys(labels))
    ids = {name: i for i, name in enumerate(order)}
    missing = sorted(set(labels) - set(ids))
    if missing:
        raise FormatError(f"{path}: labels {missing} not in declared label list")
    X = np.stack(rows).astype(DTYPE).reshape(len(rows), channels, length)
    y = np.array([ids[s] for s in labels], dtype=np.int64)
    return Dataset(X, y, tuple(order))


def save_dataset(d: Dataset, path, comments: Iterable[str] = ()) -> None:
    lines = [f"#channels={d.channels} length={d.length}", "#labels\t" + "\t".join(d.label_names)]
    lines += [f"# {c}" for c in comments]
    flat = d.X.reshape(d.n, d.channels * d.length)
    for label, row in zip(d.y, flat):
        lines.append(d.label_names[label] + "\t" + "\t".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def oversample_balance(d: Dataset, seed: int) -> Dataset:
    """Duplicate randomly chosen members of each minority class up to the majority count."""
    counts = d.class_counts()
    target = counts.max()
    if np.all(counts == target):
        return d
    rng = np.random.default_rng(seed)
    extra = []
    for cls in range(d.n_classes):
        deficit = target - counts[cls]
        if deficit == 0:
            continue
        members = np.flatnonzero(d.y == cls)
        if len(members) == 0:
            raise InvariantError(f"class {d.label_names[cls]!r} has no members to duplicate")
        extra.append(rng.choice(members, size=deficit, replace=True))
    index = np.concatenate([np.arange(d.n)] + extra)
    return d.subset(index)


def znormalize(d: Dataset) -> Dataset:
    X = d.X.astype(np.float64)
    mean = X.mean(axis=2, keepdims=True)
    std = X.std(axis=2, keepdims=True)
    flat = std < 1e-8
    out = np.where(flat, 0.0, (X - mean) / np.where(flat, 1.0, std))
    return Dataset(out, d.y, d.label_names)


def stratified_split(d: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Split off ``fraction`` of every class (at least one member) as the second part."""
    rng = np.random.default_rng(seed)
    first, second = [], []
    for cls in range(d.n_classes):
        members = rng.permutation(np.flatnonzero(d.y == cls))
        cut = int(round(fraction * len(members)))
        if len(members) > 1:
            cut = min(max(cut, 1), len(members) - 1)
        second.extend(members[:cut])
        first.extend(members[cut:])
    return d.subset(np.sort(first)), d.subset(np.sort(second))


@dataclass(eq=False)
class CondensedSet:
    """Synthetic series paired with soft-label probability vectors."""

    X: np.ndarray
    soft_labels: np.ndarray
    label_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=DTYPE)
        self.soft_labels = np.ascontiguousarray(self.soft_labels, dtype=DTYPE)
        if self.X.ndim != 3 or self.soft_labels.ndim != 2:
            raise ShapeError("condensed set needs [n, channels, L] series and [n, V] labels")
        if self.X.shape[0] != self.soft_labels.shape[0]:
            raise ShapeError("series and soft labels differ in count")
        if not self.label_names:
            self.label_names = tuple(str(i) for i in range(self.soft_labels.shape[1]))
        self.label_names = tuple(str(s) for s in self.label_names)
        if len(self.label_names) != self.soft_labels.shape[1]:
            raise ShapeError("label_names length does not match soft-label width")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_classes(self) -> int:
        return self.soft_labels.shape[1]

    @property
    def channels(self) -> int:
        return self.X.shape[1]

    @property
    def length(self) -> int:
        return self.X.shape[2]

    @property
    def spc(self) -> int:
        return self.n // self.n_classes if self.n_classes else 0

    @property
    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.soft_labels, axis=1)

    def __len__(self) -> int:
        return self.n

    def validate(self) -> None:
        if not np.all(np.isfinite(self.X)):
            raise InvariantError("condensed series contain non-finite values")
        s = self.soft_labels.astype(np.float64)
        if np.any(s < 0):
            raise InvariantError("soft label with negative entry")
        bad = np.flatnonzero(np.abs(s.sum(axis=1) - 1.0) > SOFT_LABEL_TOL)
        if len(bad):
            raise InvariantError(f"soft label of item {bad[0]} does not sum to 1")

    def __eq__(self, other) -> bool:
        if not isinstance(other, CondensedSet):
            return NotImplemented
        return (
            self.label_names == other.label_names
            and self.X.shape == other.X.shape
            and self.soft_labels.shape == other.soft_labels.shape
            and self.X.tobytes() == other.X.tobytes()
            and self.soft_labels.tobytes() == other.soft_labels.tobytes()
        )


def save_condensed(c: CondensedSet, path, comments: Iterable[str] = ()) -> None:
    c.validate()
    lines = [
        f"#shapecond-condensed v1 channels={c.channels} length={c.length} classes={c.n_classes}",
        "#labels\t" + "\t".join(c.label_names),
    ]
    lines += [f"# {line}" for line in comments]
    flat = c.X.reshape(c.n, c.channels * c.length)
    for row, soft in zip(flat, c.soft_labels):
        lines.append("\t".join(fmt(v) for v in np.concatenate([row, soft])))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_condensed(path) -> CondensedSet:
    with open(path, encoding="utf-8") as fh:
        text = fh.read().splitlines()
    if not text:
        raise FormatError(f"{path}: empty file")
    m = _CONDENSED_HEADER.match(text[0])
    if not m:
        raise FormatError(f"{path}: bad condensed-set header {text[0][:80]!r}")
    channels, length, classes = (int(g) for g in m.groups())
    if channels < 1 or length < 1 or classes < 1:
        raise FormatError(f"{path}: invalid dimensions in header")
    names: tuple[str, ...] = ()
    width = channels * length + classes
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("#labels\t"):
                names = tuple(line.split("\t")[1:])
            continue
        parts = line.split("\t")
        if len(parts) != width:
            raise FormatError(f"line {lineno}: expected {width} fields, got {len(parts)}")
        rows.append(_parse_floats(parts, lineno))
    data = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    X = data[:, : channels * length].reshape(len(rows), channels, length)
    c = CondensedSet(X, data[:, channels * length :], names)
    c.validate()
    return c
