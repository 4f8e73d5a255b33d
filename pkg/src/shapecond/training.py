"""Minibatch training loop shared by teachers and students."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from shapecond.errors import DivergenceError
from shapecond.models import ConvNet
from shapecond.nn import AdamW, cross_entropy

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    patience: int | None = 10

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int | None = None


def accuracy(net: ConvNet, X, y) -> float:
    if len(X) == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(net.predict(X) == np.asarray(y)))


def train_network(net: ConvNet, X, targets, cfg: TrainConfig, val=None) -> TrainHistory:
    """Fit ``net`` on ``(X, targets)`` with AdamW and mean cross-entropy.

    ``targets`` are class ids or probability rows. With ``val=(X_val, y_val)`` and a
    patience, training stops once validation accuracy has not improved for
    ``patience`` epochs and the best-scoring weights are restored.
    """
    X = np.asarray(X, dtype=net.dtype)
    targets = np.asarray(targets)
    n = len(X)
    rng = np.random.default_rng(cfg.seed)
    opt = AdamW(net.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    hist = TrainHistory()
    best_acc, best_state, stale = -1.0, None, 0
    early = val is not None and cfg.patience is not None
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            opt.zero_grad()
            logits = net.forward(X[idx], "train")
            loss, dlogits = cross_entropy(logits, targets[idx])
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}", epoch)
            net.backward(dlogits, input_grad=False)
            opt.step()
            total += loss * len(idx)
        hist.loss.append(total / n)
        log.debug("epoch %d loss %.6f", epoch, hist.loss[-1])
        if early:
            acc = accuracy(net, *val)
            hist.val_accuracy.append(acc)
            if acc > best_acc:
                best_acc, stale, hist.best_epoch = acc, 0, epoch
                best_state = {k: v.copy() for k, v in net.state_arrays().items()}
            else:
                stale += 1
                if stale >= cfg.patience:
                    log.info("early stop at epoch %d (best %d)", epoch, hist.best_epoch)
                    break
    if best_state is not None:
        net.load_state_arrays(best_state)
    return hist
