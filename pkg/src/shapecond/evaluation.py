"""Condensed-set evaluation: students, accuracy metrics, shapelet probe, architecture grid."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from shapecond.data import CondensedSet, Dataset
from shapecond.errors import DegenerateError, EmptyError
from shapecond.models import DEFAULT_ARCH, Arch, ConvNet
from shapecond.nn import AdamW, Tensor, cross_entropy, linear_backward, linear_forward
from shapecond.shapelets import ShapeletPool, transform_dataset
from shapecond.training import TrainConfig, train_network

log = logging.getLogger(__name__)

STUDENT_CONFIG = TrainConfig(lr=1e-3, weight_decay=1e-4, epochs=100, batch_size=64, patience=None)
FULL_BATCH_LIMIT = 256


def train_student(c: CondensedSet, arch: Arch = DEFAULT_ARCH, cfg: TrainConfig = STUDENT_CONFIG) -> ConvNet:
    """Fresh shapelet-free network fitted to ``(x, soft label)`` pairs."""
    if len(c) == 0:
        raise EmptyError("cannot train a student on an empty condensed set")
    if len(c) <= FULL_BATCH_LIMIT:
        cfg = replace(cfg, batch_size=len(c))
    net = ConvNet(arch, c.channels, c.n_classes, seed=cfg.seed)
    net.history = train_network(net, c.X, c.soft_labels, cfg)
    return net


def train_full_student(d: Dataset, arch: Arch = DEFAULT_ARCH, cfg: TrainConfig = STUDENT_CONFIG) -> ConvNet:
    """The same student recipe trained on the full dataset with hard labels."""
    net = ConvNet(arch, d.channels, d.n_classes, seed=cfg.seed)
    net.history = train_network(net, d.X, d.y, cfg)
    return net


def evaluate(model: ConvNet, test: Dataset) -> float:
    """Fraction of correct argmax predictions (ties resolve to the lowest class id)."""
    if len(test) == 0:
        raise EmptyError("empty test set")
    return float(np.mean(model.predict(test.X) == test.y))


def per_class_accuracy(model: ConvNet, test: Dataset) -> list[float | None]:
    pred = model.predict(test.X)
    out = []
    for cls in range(test.n_classes):
        mask = test.y == cls
        out.append(float(np.mean(pred[mask] == cls)) if mask.any() else None)
    return out


@dataclass
class EvalReport:
    student_accuracy: float
    full_accuracy: float | None
    accuracy_ratio: float | None
    per_class_accuracy: list
    seeds: list[int]
    student_accuracies: list[float] = field(default_factory=list)
    full_accuracies: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def accuracy_ratio(student_accuracy: float, full_accuracy: float | None) -> float | None:
    if full_accuracy is None or full_accuracy <= 0:
        return None
    return student_accuracy / full_accuracy


def build_report(student_accs, full_accs, per_class, seeds, config=None) -> EvalReport:
    student = float(np.mean(student_accs))
    full = float(np.mean(full_accs)) if full_accs else None
    return EvalReport(
        student_accuracy=student,
        full_accuracy=full,
        accuracy_ratio=accuracy_ratio(student, full),
        per_class_accuracy=per_class,
        seeds=list(seeds),
        student_accuracies=[float(a) for a in student_accs],
        full_accuracies=[float(a) for a in full_accs],
        config=dict(config or {}),
    )


def evaluate_condensed(
    c: CondensedSet,
    test: Dataset,
    seeds=(0, 1, 2),
    train: Dataset | None = None,
    arch: Arch = DEFAULT_ARCH,
    cfg: TrainConfig = STUDENT_CONFIG,
    config: dict | None = None,
) -> EvalReport:
    """Average student accuracy over ``seeds``; with ``train`` also the full-data reference."""
    student_accs, full_accs, per_class = [], [], []
    for seed in seeds:
        run = replace(cfg, seed=seed)
        student = train_student(c, arch, run)
        student_accs.append(evaluate(student, test))
        per_class.append(per_class_accuracy(student, test))
        if train is not None:
            full_accs.append(evaluate(train_full_student(train, arch, run), test))
    mean_per_class = [
        None if any(p[i] is None for p in per_class) else float(np.mean([p[i] for p in per_class]))
        for i in range(test.n_classes)
    ]
    return build_report(student_accs, full_accs, mean_per_class, seeds, config)


# -- shapelet-knowledge probe --------------------------------------------------


@dataclass
class LinearProbe:
    """Softmax-linear classifier on standardized shapelet features."""

    mean: np.ndarray
    scale: np.ndarray
    weight: np.ndarray
    bias: np.ndarray

    def logits(self, feats) -> np.ndarray:
        z = (np.asarray(feats, dtype=np.float64) - self.mean) / self.scale
        return z @ self.weight.T + self.bias

    def predict(self, feats) -> np.ndarray:
        return np.argmax(self.logits(feats), axis=1)


def fit_probe(feats, labels, n_classes: int, steps: int = 500, lr: float = 0.05, weight_decay: float = 1e-3) -> LinearProbe:
    feats = np.asarray(feats, dtype=np.float64)
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise DegenerateError("probe needs at least two classes")
    mean = feats.mean(axis=0)
    scale = feats.std(axis=0)
    scale[scale < 1e-12] = 1.0
    z = (feats - mean) / scale
    w = Tensor(np.zeros((n_classes, z.shape[1])))
    b = Tensor(np.zeros(n_classes))
    opt = AdamW([w, b], lr=lr, weight_decay=weight_decay)
    for _ in range(steps):
        opt.zero_grad()
        logits, cache = linear_forward(z, w.data, b.data)
        _, dlogits = cross_entropy(logits, labels)
        _, w.grad[...], b.grad[...] = linear_backward(dlogits, cache)
        opt.step()
    return LinearProbe(mean, scale, w.data, b.data)


def shapelet_preservation_probe(
    full: Dataset, c: CondensedSet, pool: ShapeletPool, window: int | None = None
) -> float:
    """Accuracy on ``c`` (against its soft-label argmax) of a probe fitted on shapelet features of ``full``."""
    if len(c) == 0:
        raise EmptyError("empty condensed set")
    probe = fit_probe(transform_dataset(full.X, pool, window), full.y, full.n_classes)
    pred = probe.predict(transform_dataset(c.X, pool, window))
    return float(np.mean(pred == c.hard_labels))


def pool_probe_accuracy(train: Dataset, test: Dataset, pool: ShapeletPool, window: int | None = None) -> float:
    """Test accuracy of a probe fitted on the shapelet features of ``train``."""
    probe = fit_probe(transform_dataset(train.X, pool, window), train.y, train.n_classes)
    return float(np.mean(probe.predict(transform_dataset(test.X, pool, window)) == test.y))


# -- architecture grid ---------------------------------------------------------

GRIDS = {
    "small": dict(depth=(2, 3), width=(16, 32), norm=("none", "batch"), activation=("relu", "leaky"), pooling=("none", "max", "mean")),
    "full": dict(
        depth=(2, 3, 4),
        width=(32, 64, 128, 256),
        norm=("none", "batch", "instance", "layer"),
        activation=("sigmoid", "relu", "leaky"),
        pooling=("none", "max", "mean"),
    ),
}


def make_grid(name: str = "small") -> list[Arch]:
    dims = GRIDS[name]
    keys = list(dims)
    return [Arch(**dict(zip(keys, combo))) for combo in itertools.product(*(dims[k] for k in keys))]


def grid_search(c: CondensedSet, test: Dataset, grid, cfg: TrainConfig = STUDENT_CONFIG) -> list[tuple[Arch, float]]:
    """Train one student per architecture and rank by test accuracy (stable on ties)."""
    grid = list(grid)
    if not grid:
        raise ValueError("empty architecture grid")
    results = []
    for arch in grid:
        acc = evaluate(train_student(c, arch, cfg), test)
        log.info("grid %s: %.4f", arch.name, acc)
        results.append((arch, acc))
    return sorted(results, key=lambda r: -r[1])
