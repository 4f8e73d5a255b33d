"""Condensed-set synthesis by inverting a frozen shapelet-augmented teacher.

Each iteration runs the whole condensed batch through the teacher with
batch-norm normalizing by the batch's own statistics (running estimates stay
fixed), then takes an Adam step on the series to lower

    mean cross-entropy(teacher(x), initial label) + bn_weight * stats mismatch

where the mismatch sums, over batch-norm layers, the squared distance between
batch mean/variance and the teacher's running mean/variance. Finally every
series is relabeled with the teacher's eval-mode class probabilities.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass

import numpy as np

from shapecond.data import CondensedSet, Dataset
from shapecond.errors import DivergenceError, InsufficientError, ShapeError
from shapecond.models import ConvNet
from shapecond.nn import AdamW, Tensor, cross_entropy, softmax

log = logging.getLogger(__name__)


@dataclass
class SynthConfig:
    spc: int = 10
    iterations: int = 2000
    lr: float = 0.2
    betas: tuple[float, float] = (0.5, 0.9)
    bn_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.spc < 1:
            raise ValueError("spc must be at least 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")


def init_condensed(d: Dataset, spc: int, seed: int) -> CondensedSet:
    """``spc`` distinct real series per class, drawn uniformly with a seeded RNG, one-hot labeled."""
    rng = np.random.default_rng(seed)
    picks = []
    for cls in range(d.n_classes):
        members = np.flatnonzero(d.y == cls)
        if len(members) < spc:
            raise InsufficientError(
                f"class {d.label_names[cls]!r} has {len(members)} series, {spc} requested"
            )
        picks.append(rng.choice(members, size=spc, replace=False))
    index = np.concatenate(picks)
    soft = np.eye(d.n_classes, dtype=np.float32)[d.y[index]]
    return CondensedSet(d.X[index].copy(), soft, d.label_names)


random_condenser = init_condensed


def bn_regularizer(batch_stats, teacher_stats) -> float:
    """Sum over layers of squared L2 gaps between batch and running mean/variance."""
    return bn_regularizer_with_grad(batch_stats, teacher_stats)[0]


def bn_regularizer_with_grad(batch_stats, teacher_stats):
    """Value plus per-layer ``(d/dmean, d/dvar)`` gradients w.r.t. the batch statistics."""
    if len(batch_stats) != len(teacher_stats):
        raise ShapeError(f"{len(batch_stats)} batch-stat layers vs {len(teacher_stats)} teacher layers")
    total = 0.0
    grads = []
    for (mu, var), (mu_bn, var_bn) in zip(batch_stats, teacher_stats):
        dm = np.asarray(mu, dtype=np.float64) - np.asarray(mu_bn, dtype=np.float64)
        dv = np.asarray(var, dtype=np.float64) - np.asarray(var_bn, dtype=np.float64)
        if dm.shape != dv.shape:
            raise ShapeError("mean and variance vectors differ in shape")
        total += float(dm @ dm + dv @ dv)
        grads.append((2.0 * dm, 2.0 * dv))
    return total, grads


def objective_and_grad(teacher: ConvNet, X, labels, bn_weight: float):
    """Synthesis objective at ``X`` and its gradient w.r.t. ``X``.

    Returns ``(task_loss, bn_loss, total, dX)``. With ``bn_weight == 0`` the
    statistics term is neither computed into the gradient nor evaluated.
    """
    logits = teacher.forward(X, "batch")
    task, dlogits = cross_entropy(logits, labels)
    bn_loss, bn_grads = 0.0, None
    if bn_weight != 0.0:
        bn_loss, grads = bn_regularizer_with_grad(teacher.batch_stats(), teacher.running_stats())
        dt = teacher.dtype
        bn_grads = [((bn_weight * gm).astype(dt), (bn_weight * gv).astype(dt)) for gm, gv in grads]
    dX = teacher.backward(dlogits, bn_grads, param_grads=False)
    return task, bn_loss, task + bn_weight * bn_loss, dX


def soft_labels(teacher: ConvNet, X) -> np.ndarray:
    logits = teacher.predict_logits(np.asarray(X, dtype=teacher.dtype)).astype(np.float64)
    return softmax(logits).astype(np.float32)


def synthesize(teacher: ConvNet, c: CondensedSet, cfg: SynthConfig, trace: list | None = None) -> CondensedSet:
    """Optimize the condensed series against the frozen teacher, then relabel.

    Labels used by the task loss are the argmax of the incoming soft labels and
    stay fixed for the whole run. When ``trace`` is a list it receives one
    ``(iteration, task_loss, bn_loss, total)`` row per iteration plus a final row
    for the optimized series.
    """
    if not teacher.frozen:
        raise RuntimeError("synthesis needs a frozen teacher")
    if c.n_classes != teacher.n_classes or c.channels != teacher.in_channels:
        raise ShapeError("condensed set does not match the teacher's classes/channels")
    labels = c.hard_labels
    x = Tensor(c.X, teacher.dtype)
    opt = AdamW([x], lr=cfg.lr, betas=tuple(cfg.betas), weight_decay=0.0)
    rows = trace if trace is not None else []
    if len(c):
        for it in range(cfg.iterations + 1):
            task, bn_loss, total, dX = objective_and_grad(teacher, x.data, labels, cfg.bn_weight)
            if not math.isfinite(total):
                raise DivergenceError(f"non-finite synthesis objective at iteration {it}", it)
            rows.append((it, task, bn_loss, total))
            if it == cfg.iterations:
                break
            x.grad[...] = dX
            opt.step()
            if it % 200 == 0:
                log.debug("iter %d task %.5f bn %.5f", it, task, bn_loss)
    soft = soft_labels(teacher, x.data) if len(c) else c.soft_labels.copy()
    return CondensedSet(x.data.copy(), soft, c.label_names)


def ablated_teacher(teacher: ConvNet) -> ConvNet:
    """Copy of ``teacher`` with the classifier's shapelet-feature weights zeroed."""
    clone = copy.deepcopy(teacher)
    for arr in clone.state_arrays().values():
        arr.flags.writeable = True
    clone.frozen = False
    clone.zero_shapelet_branch()
    clone.freeze()
    return clone
