"""Counted-cost benchmark of constrained vs full-scan shapelet discovery.

Costs are compared on exact integer alignment counts; wall-clock times are
reported alongside for information only.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from shapecond.data import Dataset
from shapecond.errors import TooLargeError
from shapecond.shapelets import DiscoveryConfig, OpCounter, discover, discover_full_scan

MAX_REFERENCE_OPS = 10**9
CSV_COLUMNS = (
    "N", "L", "l", "p", "c", "ref_ops", "fast_ops",
    "measured_ratio", "predicted_ratio", "ref_seconds", "fast_seconds",
)


@dataclass(frozen=True)
class CostModel:
    N: int
    L: float
    p: float
    c: int
    M: int | None = None
    K: int | None = None

    def __post_init__(self):
        if self.N <= 0 or self.L <= 0 or self.c <= 0 or not 0 <= self.p < 1:
            raise ValueError(f"invalid cost model {self}")


def predict_ratio(m: CostModel) -> float:
    """Full-scan over constrained alignment operations: L / (c (1-p)^2)."""
    return m.L / (m.c * (1.0 - m.p) ** 2)


def effective_length(L: int, lengths: Sequence[int]) -> float:
    """Alignments per full-scan evaluation, averaged over the candidate population."""
    counts = [L - l + 1 for l in lengths]
    return sum(c * c for c in counts) / sum(counts)


def reference_cost(d: Dataset, cfg: DiscoveryConfig) -> int:
    """The N * M * L guard estimate for a full-scan run."""
    cfg = cfg.resolved(d.length)
    M = d.n * d.channels * sum(d.length - l + 1 for l in cfg.lengths())
    return d.n * M * d.length


@dataclass
class BenchResult:
    N: int
    L: int
    l: str
    p: float
    c: int
    reference: OpCounter
    fast: OpCounter
    measured_ratio: float
    predicted_ratio: float
    ref_seconds: float | None
    fast_seconds: float | None

    def row(self) -> list:
        return [
            self.N, self.L, self.l, self.p, self.c, self.reference.alignment_ops, self.fast.alignment_ops,
            f"{self.measured_ratio:.6f}", f"{self.predicted_ratio:.6f}",
            "" if self.ref_seconds is None else f"{self.ref_seconds:.4f}",
            "" if self.fast_seconds is None else f"{self.fast_seconds:.4f}",
        ]


def run_reference(d: Dataset, cfg: DiscoveryConfig, max_ops: int = MAX_REFERENCE_OPS):
    estimate = reference_cost(d, cfg)
    if estimate > max_ops:
        raise TooLargeError(f"full-scan reference needs ~{estimate:.3g} alignment ops (limit {max_ops:.3g})")
    t0 = time.perf_counter()
    _, counter = discover_full_scan(d, cfg)
    return counter, time.perf_counter() - t0


def run_bench(
    d: Dataset,
    cfg: DiscoveryConfig,
    reference: tuple[OpCounter, float] | None = None,
    max_ops: int = MAX_REFERENCE_OPS,
) -> BenchResult:
    """Run the fast pipeline (and the full-scan reference unless supplied) with counters."""
    cfg = cfg.resolved(d.length)
    ref_counter, ref_seconds = reference if reference is not None else run_reference(d, cfg, max_ops)
    t0 = time.perf_counter()
    _, fast = discover(d, cfg)
    fast_seconds = time.perf_counter() - t0
    lengths = cfg.lengths()
    model = CostModel(N=d.n, L=effective_length(d.length, lengths), p=cfg.prune, c=cfg.positions_per_eval)
    return BenchResult(
        N=d.n,
        L=d.length,
        l=str(lengths[0]) if len(lengths) == 1 else f"{lengths[0]}-{lengths[-1]}",
        p=cfg.prune,
        c=cfg.positions_per_eval,
        reference=ref_counter,
        fast=fast,
        measured_ratio=ref_counter.alignment_ops / fast.alignment_ops,
        predicted_ratio=predict_ratio(model),
        ref_seconds=ref_seconds,
        fast_seconds=fast_seconds,
    )


def bench_sweep(d: Dataset, cfg: DiscoveryConfig, prunes: Iterable[float], max_ops: int = MAX_REFERENCE_OPS):
    cfg = cfg.resolved(d.length)
    reference = run_reference(d, cfg, max_ops)
    return [run_bench(d, replace(cfg, prune=p), reference) for p in prunes]


def bench_csv(results: Iterable[BenchResult], comments: Iterable[str] = (), timing: bool = True) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        row = r.row()
        if not timing:
            row[-2:] = ["", ""]
        writer.writerow(row)
    return buf.getvalue()


def write_bench_csv(results, path, comments=(), timing: bool = True) -> None:
    Path(path).write_text(bench_csv(results, comments, timing), encoding="utf-8")
