"""Acceptance criteria, one test each. Every test records a PASS/FAIL line (see conftest)."""

import hashlib
import time
import zlib

import numpy as np
import pytest

from shapecond.bench import CostModel, predict_ratio, run_bench
from shapecond.cli import main
from shapecond.data import znormalize
from shapecond.evaluation import evaluate, grid_search, make_grid, train_student
from shapecond.experiments import (
    ToyConfig,
    condensation_experiment,
    prepare,
    probe_experiment,
    pruning_experiment,
)
from shapecond.models import DEFAULT_ARCH, Arch, ConvNet
from shapecond.shapelets import DiscoveryConfig, discover, discover_full_scan, reference_discover
from shapecond.synthesis import SynthConfig, bn_regularizer, init_condensed, objective_and_grad, synthesize
from shapecond.toy import gen_toy

import gradcheck
from conftest import ACCEPTANCE

pytestmark = pytest.mark.slow

# The benchmark toy is the generator's default draw (2 classes, N=400, L=128).
TOY = ToyConfig()


def verdict(n, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {title} ({detail})"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def setup():
    return prepare(TOY)


def test_1_oracle_equivalence():
    t0 = time.perf_counter()
    d = znormalize(gen_toy(n=30, length=32, motif_len=8, jitter=3, noise_sigma=0.5, seed=7)[0])
    cfg = DiscoveryConfig(prune=0.0, window=32, l_min=4, l_max=16, length_stride=4, k=400)
    fast, _ = discover(d, cfg)
    full, _ = discover_full_scan(d, cfg)
    ref = reference_discover(d, cfg)
    same_keys = [s.candidate.key for s in fast] == [s.candidate.key for s in ref] == [s.candidate.key for s in full]
    gap = max(abs(a.score - b.score) for a, b in zip(fast, ref))
    values = all(np.array_equal(a.candidate.values, b.candidate.values) for a, b in zip(fast, ref))
    secs = time.perf_counter() - t0
    verdict(1, "constrained discovery equals full-scan reference", same_keys and values and gap <= 1e-9 and secs < 60,
            f"{len(fast)} shapelets, max IG gap {gap:.1e}, {secs:.1f}s")


def test_2_counter_identity():
    d = gen_toy(n=100, length=64, motif_len=8, jitter=4, noise_sigma=0.5, seed=3)[0]
    errs = {}
    reference = None
    for p in (0.0, 0.5, 0.7):
        r = run_bench(d, DiscoveryConfig(prune=p, window=1, l_min=8, l_max=8), reference)
        reference = (r.reference, r.ref_seconds)
        errs[p] = abs(r.measured_ratio / r.predicted_ratio - 1)
    worked = predict_ratio(CostModel(N=10_000, L=3000, p=0.7, c=3))
    ok = max(errs.values()) <= 0.05 and abs(worked - 11_111) <= 1
    verdict(2, "alignment-op ratio matches L'/(c(1-p)^2)", ok,
            "rel. error " + ", ".join(f"p={p}: {e:.2%}" for p, e in errs.items()) + f"; worked example {worked:.1f}")


def test_3_gradient_suite():
    t0 = time.perf_counter()
    worst = {}
    for name, check in gradcheck.OPS.items():
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        worst[name] = max(check(rng) for _ in range(50))
    secs = time.perf_counter() - t0
    bad = {k: v for k, v in worst.items() if not v < gradcheck.RTOL}
    verdict(3, "finite-difference checks, 50 cases per op", not bad and secs < 120,
            f"{len(worst)} ops, worst {max(worst.values()):.1e}, {secs:.1f}s" + (f", failing {sorted(bad)}" if bad else ""))


def test_4_bn_regularizer():
    rng = np.random.default_rng(0)
    pool = gradcheck.random_pool(rng, 1, 32, 3, 1)
    X = rng.standard_normal((4, 1, 32))
    probe = ConvNet(DEFAULT_ARCH, 1, 2, pool, seed=0, dtype=np.float64)
    probe.forward(X, "batch")
    matched = ConvNet(DEFAULT_ARCH, 1, 2, pool, seed=0, dtype=np.float64)
    for st, (mu, var) in zip(matched.bn_states, probe.batch_stats()):
        st.running_mean[...] = mu
        st.running_var[...] = var
    matched.freeze()
    zero = objective_and_grad(matched, X, np.array([0, 1, 0, 1]), 1.0)[1]
    zero_direct = bn_regularizer(probe.batch_stats(), matched.running_stats())

    errors = []
    for seed, arch, h in [(1, DEFAULT_ARCH, 1e-6), (2, DEFAULT_ARCH, 1e-6),
                          (3, Arch(depth=3, width=8, activation="sigmoid", pooling="mean"), 1e-4)]:
        r = np.random.default_rng(seed)
        net = ConvNet(arch, 1, 2, pool, seed=seed, dtype=np.float64)
        for st in net.bn_states:
            st.running_mean[...] = r.standard_normal(st.running_mean.shape)
            st.running_var[...] = r.uniform(0.5, 2, st.running_var.shape)
        net.freeze()
        x = r.standard_normal((3, 1, 32))
        y = np.array([0, 1, 1])
        grad = objective_and_grad(net, x, y, 1.0)[3] - objective_and_grad(net, x, y, 0.0)[3]
        errors.append(gradcheck.rel_error(grad, gradcheck.numeric_grad(lambda: objective_and_grad(net, x, y, 1.0)[1], x, h)))
    ok = zero == 0.0 and zero_direct == 0.0 and max(errors) < 1e-4
    verdict(4, "BN regularizer zero at matched stats, gradient checks", ok,
            f"value {zero}, gradient rel. errors {', '.join(f'{e:.1e}' for e in errors)}")


def test_5_end_to_end_condensation(setup):
    t0 = time.perf_counter()
    res = condensation_experiment(setup, spc=1, iterations=2000, seeds=(0, 1, 2))
    secs = time.perf_counter() - t0
    ok = res.condensed_ratio >= 0.9 and np.mean(res.random) < np.mean(res.condensed) and secs < 15 * 60
    verdict(5, "SPC=1 student >= 90% of full-data student, random strictly lower", ok,
            f"full {np.mean(res.full):.3f}, condensed {np.mean(res.condensed):.3f} (ratio {res.condensed_ratio:.3f}), "
            f"random {np.mean(res.random):.3f} (ratio {res.random_ratio:.3f}), {secs:.0f}s")


def test_6_shapelet_preservation_probe(setup):
    full, ablated = probe_experiment(setup, spc=10, iterations=2000, seeds=range(5))
    gap = np.mean(full) - np.mean(ablated)
    verdict(6, "probe on condensed output beats shapelet-ablated task-only run by >= 5 points", gap >= 0.05,
            f"condensed {np.mean(full):.3f}, ablated {np.mean(ablated):.3f}, gap {100 * gap:.1f} points")


def test_7_pruning_robustness(setup):
    acc = pruning_experiment(setup.train, setup.test, [0.0, 0.5, 0.9])
    drop5, drop9 = acc[0.0] - acc[0.5], acc[0.0] - acc[0.9]
    ok = abs(drop5) <= 0.02 and drop9 > drop5
    verdict(7, "p=0.5 within 2 points of p=0, p=0.9 degrades more", ok,
            f"probe accuracy p=0 {acc[0.0]:.3f}, p=0.5 {acc[0.5]:.3f}, p=0.9 {acc[0.9]:.3f}")


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_8_cli_determinism(tmp_path):
    f = {k: tmp_path / k for k in ("train.tsv", "test.tsv", "pool.txt", "teacher.ckpt", "loss.csv",
                                    "cond.txt", "report.json", "grid.csv", "bench.csv")}
    toy = ["--n", 60, "--len", 64, "--motif-len", 12, "--jitter", 4, "--noise", 0.3]
    stages = [
        ["gen-toy", *toy, "--seed", 1, "--out", f["train.tsv"]],
        ["gen-toy", *toy, "--seed", 2, "--out", f["test.tsv"]],
        ["discover", "--data", f["train.tsv"], "--k", 8, "--out", f["pool.txt"]],
        ["teach", "--data", f["train.tsv"], "--pool", f["pool.txt"], "--lr", 1e-3, "--epochs", 10, "--out", f["teacher.ckpt"]],
        ["synthesize", "--teacher", f["teacher.ckpt"], "--data", f["train.tsv"], "--spc", 2, "--iters", 50,
         "--loss-csv", f["loss.csv"], "--out", f["cond.txt"]],
        ["eval", "--condensed", f["cond.txt"], "--test", f["test.tsv"], "--train", f["train.tsv"], "--epochs", 10,
         "--report", f["report.json"]],
        ["grid", "--condensed", f["cond.txt"], "--test", f["test.tsv"], "--epochs", 3, "--out", f["grid.csv"]],
        ["bench", "--data", f["train.tsv"], "--fixed-len", 8, "--prune", 0, 0.5, "--no-timing", "--out", f["bench.csv"]],
    ]
    runs = []
    codes = []
    for _ in range(2):
        codes += [main([str(a) for a in argv] + ["--threads", "1"]) for argv in stages]
        runs.append({k: sha(p) for k, p in f.items()})
    differing = sorted(k for k in f if runs[0][k] != runs[1][k])
    verdict(8, "every CLI stage re-run is bit-identical", set(codes) == {0} and not differing,
            f"{len(f)} artifacts hashed" + (f", differing {differing}" if differing else ""))


def test_9_grid_search(setup):
    t0 = time.perf_counter()
    c = synthesize(setup.teacher, init_condensed(setup.train, 1, 0), SynthConfig(spc=1, iterations=2000, seed=0))
    grid = make_grid("small")
    first = grid_search(c, setup.test, grid)
    second = grid_search(c, setup.test, grid)
    default = evaluate(train_student(c, DEFAULT_ARCH), setup.test)
    secs = time.perf_counter() - t0
    best_arch, best = first[0]
    ok = len(first) == 48 and first == second and best >= default - 0.01 and secs < 30 * 60
    verdict(9, "48-architecture grid is deterministic and best >= default - 1 point", ok,
            f"best {best_arch.name} {best:.3f}, default {default:.3f}, {secs:.0f}s for two passes")
