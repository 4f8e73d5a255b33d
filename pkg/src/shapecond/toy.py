"""Synthetic planted-motif classification data."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from shapecond.data import Dataset


def bump(width: int) -> np.ndarray:
    """Raised-cosine bump of ``width`` samples peaking at 1."""
    if width == 1:
        return np.ones(1)
    t = np.arange(width)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * t / (width - 1)))


def motif_width(cls: int, classes: int, motif_len: int) -> int:
    return max(3, int(round(motif_len * (cls + 1) / classes)))


def motif_base(cls: int, classes: int, length: int, width: int) -> int:
    return int(round((cls + 1) * length / (classes + 1) - width / 2))


def gen_toy(
    classes: int = 2,
    n: int = 200,
    length: int = 128,
    motif_len: int = 16,
    jitter: int = 8,
    noise_sigma: float = 0.5,
    amplitude: float = 1.0,
    seed: int = 0,
) -> tuple[Dataset, np.ndarray]:
    """Balanced dataset where class ``c`` carries a bump of class-specific width.

    The bump of class ``c`` sits at a class-specific base position shifted by a
    uniform integer jitter in ``[-jitter, jitter]``, on top of white Gaussian
    noise. Returns the dataset and an ``[n, 3]`` table of (label, start, width).
    """
    if classes < 1 or n < classes or length < 3:
        raise ValueError("need classes >= 1, n >= classes and length >= 3")
    rng = np.random.default_rng(seed)
    y = np.arange(n) % classes
    X = noise_sigma * rng.standard_normal((n, 1, length))
    truth = np.zeros((n, 3), dtype=np.int64)
    for i, cls in enumerate(y):
        w = min(motif_width(cls, classes, motif_len), length)
        start = motif_base(cls, classes, length, w) + int(rng.integers(-jitter, jitter + 1))
        start = int(np.clip(start, 0, length - w))
        X[i, 0, start : start + w] += amplitude * bump(w)
        truth[i] = (cls, start, w)
    return Dataset(X, y, tuple(str(c) for c in range(classes))), truth


def save_truth(truth: np.ndarray, path) -> None:
    lines = ["index\tlabel\tstart\twidth"]
    lines += [f"{i}\t{l}\t{s}\t{w}" for i, (l, s, w) in enumerate(truth)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_truth(path) -> np.ndarray:
    rows = Path(path).read_text(encoding="utf-8").splitlines()[1:]
    return np.array([[int(v) for v in r.split("\t")[1:]] for r in rows if r.strip()], dtype=np.int64)
