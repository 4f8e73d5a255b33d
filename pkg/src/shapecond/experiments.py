"""Toy-benchmark experiments shared by the acceptance suite and ``scripts/``."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from shapecond.data import Dataset, znormalize
from shapecond.evaluation import (
    STUDENT_CONFIG,
    evaluate,
    pool_probe_accuracy,
    shapelet_preservation_probe,
    train_full_student,
    train_student,
)
from shapecond.shapelets import DiscoveryConfig, ShapeletPool, discover
from shapecond.synthesis import SynthConfig, ablated_teacher, init_condensed, synthesize
from shapecond.teacher import train_teacher
from shapecond.toy import gen_toy
from shapecond.training import TrainConfig

log = logging.getLogger(__name__)


@dataclass
class ToyConfig:
    classes: int = 2
    n: int = 400
    length: int = 128
    motif_len: int = 16
    jitter: int = 8
    noise_sigma: float = 0.5
    amplitude: float = 1.0
    train_seed: int = 1
    test_seed: int = 2


def toy_split(cfg: ToyConfig = ToyConfig()) -> tuple[Dataset, Dataset]:
    """Independently seeded, z-normalized train and test draws."""
    kw = dict(
        classes=cfg.classes, n=cfg.n, length=cfg.length, motif_len=cfg.motif_len,
        jitter=cfg.jitter, noise_sigma=cfg.noise_sigma, amplitude=cfg.amplitude,
    )
    train = gen_toy(seed=cfg.train_seed, **kw)[0]
    test = gen_toy(seed=cfg.test_seed, **kw)[0]
    return znormalize(train), znormalize(test)


TEACHER_CONFIG = TrainConfig(lr=1e-3, epochs=50, batch_size=64, patience=None)


@dataclass
class Setup:
    train: Dataset
    test: Dataset
    pool: ShapeletPool
    teacher: object


def prepare(
    toy: ToyConfig = ToyConfig(),
    discovery: DiscoveryConfig = DiscoveryConfig(),
    teacher_cfg: TrainConfig = TEACHER_CONFIG,
) -> Setup:
    train, test = toy_split(toy)
    pool, _ = discover(train, discovery)
    teacher = train_teacher(train, pool, teacher_cfg, window=pool.window)
    return Setup(train, test, pool, teacher)


@dataclass
class CondensationResult:
    full: list[float] = field(default_factory=list)
    condensed: list[float] = field(default_factory=list)
    random: list[float] = field(default_factory=list)

    @property
    def condensed_ratio(self) -> float:
        return float(np.mean(self.condensed) / np.mean(self.full))

    @property
    def random_ratio(self) -> float:
        return float(np.mean(self.random) / np.mean(self.full))

    def to_dict(self) -> dict:
        return dict(asdict(self), condensed_ratio=self.condensed_ratio, random_ratio=self.random_ratio)


def condensation_experiment(
    setup: Setup,
    spc: int = 1,
    iterations: int = 2000,
    seeds=(0, 1, 2),
    synth: SynthConfig = SynthConfig(),
    student: TrainConfig = STUDENT_CONFIG,
) -> CondensationResult:
    """Student accuracy from the full data, the synthesized set and random real samples, per seed.

    The random reference uses the same seeded initial selection that synthesis
    starts from, so the two differ only by the optimization.
    """
    res = CondensationResult()
    for seed in seeds:
        cfg = replace(student, seed=seed)
        init = init_condensed(setup.train, spc, seed)
        c = synthesize(setup.teacher, init, replace(synth, spc=spc, iterations=iterations, seed=seed))
        res.full.append(evaluate(train_full_student(setup.train, cfg=cfg), setup.test))
        res.condensed.append(evaluate(train_student(c, cfg=cfg), setup.test))
        res.random.append(evaluate(train_student(init, cfg=cfg), setup.test))
        log.info("seed %d: full %.4f condensed %.4f random %.4f", seed, res.full[-1], res.condensed[-1], res.random[-1])
    return res


def probe_experiment(
    setup: Setup, spc: int = 1, iterations: int = 2000, seeds=range(5), synth: SynthConfig = SynthConfig()
) -> tuple[list[float], list[float]]:
    """Probe accuracy of the synthesized set vs the task-only run against the shapelet-ablated teacher."""
    ablated = ablated_teacher(setup.teacher)
    full, abl = [], []
    for seed in seeds:
        init = init_condensed(setup.train, spc, seed)
        run = replace(synth, spc=spc, iterations=iterations, seed=seed)
        c = synthesize(setup.teacher, init, run)
        c_abl = synthesize(ablated, init, replace(run, bn_weight=0.0))
        full.append(shapelet_preservation_probe(setup.train, c, setup.pool))
        abl.append(shapelet_preservation_probe(setup.train, c_abl, setup.pool))
        log.info("seed %d: probe condensed %.4f ablated %.4f", seed, full[-1], abl[-1])
    return full, abl


def pruning_experiment(train: Dataset, test: Dataset, prunes, discovery: DiscoveryConfig = DiscoveryConfig()) -> dict:
    """Probe test accuracy of the pool discovered at each pruning ratio."""
    out = {}
    for p in prunes:
        pool, counter = discover(train, replace(discovery, prune=p))
        out[p] = pool_probe_accuracy(train, test, pool)
        log.info("prune %.2f: %d ops, probe accuracy %.4f", p, counter.alignment_ops, out[p])
    return out
