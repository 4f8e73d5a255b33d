import numpy as np

from shapecond.experiments import (
    TEACHER_CONFIG,
    ToyConfig,
    condensation_experiment,
    prepare,
    probe_experiment,
    pruning_experiment,
    toy_split,
)
from shapecond.evaluation import STUDENT_CONFIG
from shapecond.shapelets import DiscoveryConfig

TINY = ToyConfig(n=24, length=40, motif_len=10, jitter=2, noise_sigma=0.2)


def test_toy_split_independent_and_normalized():
    train, test = toy_split(TINY)
    assert train.n == test.n == 24
    assert not np.array_equal(train.X, test.X)
    np.testing.assert_allclose(train.X.astype(np.float64).mean(axis=2), 0, atol=1e-5)


def test_experiments_run_end_to_end():
    from dataclasses import replace

    setup = prepare(TINY, DiscoveryConfig(k=4), replace(TEACHER_CONFIG, epochs=3))
    res = condensation_experiment(setup, iterations=5, seeds=(0, 1), student=replace(STUDENT_CONFIG, epochs=3))
    assert len(res.full) == len(res.condensed) == len(res.random) == 2
    assert res.condensed_ratio == np.mean(res.condensed) / np.mean(res.full)
    assert set(res.to_dict()) >= {"condensed_ratio", "random_ratio"}
    full, ablated = probe_experiment(setup, iterations=5, seeds=range(2))
    assert len(full) == len(ablated) == 2 and all(0 <= a <= 1 for a in full + ablated)
    acc = pruning_experiment(setup.train, setup.test, [0.0, 0.5], DiscoveryConfig(k=4))
    assert list(acc) == [0.0, 0.5]
