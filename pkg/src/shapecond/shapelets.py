"""Position-constrained shapelet discovery and the shapelet transform.

Candidates are single-channel contiguous subsequences. A candidate extracted at
position ``j`` is compared to a series only at positions ``j-W .. j+W`` (clipped
to the valid range), so each distance evaluation costs at most ``2W+1``
alignments no matter how long the series is. Candidates are ranked by the best
information gain of a threshold split on their distances.

The scoring kernel is compiled with numba; ``reference_discover`` is an
independent pure-Python full-scan implementation kept as an oracle.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from shapecond.data import DTYPE, Dataset, fmt
from shapecond.errors import ConfigError, DegenerateError, FormatError, ShapeError

# Prefer OpenMP: probing an outdated system TBB only produces a warning.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

SCORE_DECIMALS = 12
# Gains closer than this are exact ties up to float rounding; the smaller threshold wins.
IG_TIE_TOL = 1e-12
_POOL_HEADER = re.compile(r"^#shapecond-pool v1 k=(\d+) window=(\d+)\s*$")


@dataclass(frozen=True, eq=False)
class Candidate:
    series_index: int
    channel: int
    position: int
    length: int
    values: np.ndarray

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.series_index, self.channel, self.position, self.length)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Candidate):
            return NotImplemented
        return self.key == other.key and np.array_equal(self.values, other.values)


@dataclass
class DiscoveryConfig:
    """Discovery knobs. ``None`` lengths resolve to L/8 and L/2 for a given series length."""

    prune: float = 0.5
    window: int = 1
    l_min: int | None = None
    l_max: int | None = None
    k: int = 20
    seed: int = 0
    length_stride: int | None = None
    score_full: bool = False

    def resolved(self, length: int) -> "DiscoveryConfig":
        l_min = self.l_min if self.l_min is not None else max(1, length // 8)
        l_max = self.l_max if self.l_max is not None else max(l_min, length // 2)
        stride = self.length_stride
        if stride is None:
            stride = max(1, int(round((l_max - l_min) / 4)))
        cfg = replace(self, l_min=l_min, l_max=l_max, length_stride=stride)
        cfg.validate(length)
        return cfg

    def validate(self, length: int) -> None:
        if not 0.0 <= self.prune < 1.0:
            raise ConfigError(f"prune ratio must lie in [0, 1), got {self.prune}")
        if self.window < 0:
            raise ConfigError("window must be non-negative")
        if self.k < 1:
            raise ConfigError("pool size k must be at least 1")
        if self.length_stride is not None and self.length_stride < 1:
            raise ConfigError("length_stride must be at least 1")
        if self.l_min is not None and self.l_max is not None:
            if not 1 <= self.l_min <= self.l_max:
                raise ConfigError(f"need 1 <= l_min <= l_max, got {self.l_min}, {self.l_max}")
            if self.l_max > length:
                raise ConfigError(f"l_max={self.l_max} exceeds series length {length}")

    def lengths(self) -> list[int]:
        out = list(range(self.l_min, self.l_max + 1, self.length_stride))
        if out[-1] != self.l_max:
            out.append(self.l_max)
        return out

    @property
    def positions_per_eval(self) -> int:
        return 2 * self.window + 1


@dataclass
class OpCounter:
    distance_evals: int = 0
    alignment_ops: int = 0
    candidates_generated: int = 0

    def __iadd__(self, other: "OpCounter") -> "OpCounter":
        self.distance_evals += other.distance_evals
        self.alignment_ops += other.alignment_ops
        self.candidates_generated += other.candidates_generated
        return self


@dataclass
class Shapelet:
    candidate: Candidate
    score: float
    threshold: float


@dataclass
class ShapeletPool:
    shapelets: list[Shapelet]
    window: int = 1

    def __len__(self) -> int:
        return len(self.shapelets)

    def __iter__(self):
        return iter(self.shapelets)

    def __getitem__(self, i) -> Shapelet:
        return self.shapelets[i]

    @property
    def max_channel(self) -> int:
        return max((s.candidate.channel for s in self.shapelets), default=-1)

    def to_text(self) -> str:
        lines = [f"#shapecond-pool v1 k={len(self)} window={self.window}"]
        for s in self.shapelets:
            c = s.candidate
            head = [str(c.channel), str(c.position), str(c.length), repr(float(s.threshold)), repr(float(s.score))]
            lines.append("\t".join(head + [fmt(v) for v in c.values]))
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def same_as(self, other: "ShapeletPool") -> bool:
        return self.window == other.window and self.to_text() == other.to_text()


def save_pool(pool: ShapeletPool, path, comments: Iterable[str] = ()) -> None:
    text = pool.to_text()
    if comments:
        head, _, rest = text.partition("\n")
        text = head + "\n" + "".join(f"# {c}\n" for c in comments) + rest
    Path(path).write_text(text, encoding="utf-8")


def parse_pool(text: str, source: str = "<pool>") -> ShapeletPool:
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{source}: empty pool file")
    m = _POOL_HEADER.match(lines[0])
    if not m:
        raise FormatError(f"{source}: bad pool header {lines[0][:80]!r}")
    k, window = int(m.group(1)), int(m.group(2))
    shapelets = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        try:
            channel, position, length = int(parts[0]), int(parts[1]), int(parts[2])
            threshold, score = float(parts[3]), float(parts[4])
            values = np.array([float(v) for v in parts[5:]], dtype=DTYPE)
        except (ValueError, IndexError):
            raise FormatError(f"{source}:{lineno}: malformed shapelet line") from None
        if len(values) != length or length < 1:
            raise FormatError(f"{source}:{lineno}: expected {length} values, got {len(values)}")
        cand = Candidate(-1, channel, position, length, values)
        shapelets.append(Shapelet(cand, score, threshold))
    if len(shapelets) != k:
        raise FormatError(f"{source}: header declares k={k}, found {len(shapelets)} shapelets")
    return ShapeletPool(shapelets, window)


def load_pool(path) -> ShapeletPool:
    return parse_pool(Path(path).read_text(encoding="utf-8"), str(path))


def file_hash(path) -> str:
    """Content hash of a pool file, ignoring comment lines."""
    return load_pool(path).content_hash()


def retained_indices(n: int, prune: float, seed: int) -> np.ndarray:
    """Seeded uniform sample of ceil((1-p) n) series indices, sorted."""
    keep = max(1, math.ceil((1.0 - prune) * n - 1e-9))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=keep, replace=False))


def _candidate_table(d: Dataset, cfg: DiscoveryConfig, series: np.ndarray) -> np.ndarray:
    rows = []
    L = d.length
    for i in series:
        for ch in range(d.channels):
            for l in cfg.lengths():
                j = np.arange(L - l + 1)
                block = np.empty((len(j), 4), dtype=np.int64)
                block[:, 0], block[:, 1], block[:, 2], block[:, 3] = i, ch, j, l
                rows.append(block)
    return np.concatenate(rows) if rows else np.empty((0, 4), dtype=np.int64)


def _make_candidate(d: Dataset, i: int, ch: int, j: int, l: int) -> Candidate:
    return Candidate(int(i), int(ch), int(j), int(l), d.X[i, ch, j : j + l].copy())


def enumerate_candidates(
    d: Dataset, cfg: DiscoveryConfig, counter: OpCounter | None = None
) -> list[Candidate]:
    if d.n == 0:
        raise ConfigError("cannot enumerate candidates of an empty dataset")
    cfg = cfg.resolved(d.length)
    table = _candidate_table(d, cfg, retained_indices(d.n, cfg.prune, cfg.seed))
    if counter is not None:
        counter.candidates_generated += len(table)
    return [_make_candidate(d, *row) for row in table]


def _window_bounds(j: int, l: int, L: int, window: int | None) -> tuple[int, int]:
    if window is None:
        return 0, L - l
    return max(0, j - window), min(L - l, j + window)


def _best_match(s: Candidate, x: np.ndarray, window: int | None, counter: OpCounter | None):
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    if s.channel >= x.shape[0]:
        raise ShapeError(f"shapelet channel {s.channel} not present in a {x.shape[0]}-channel series")
    L = x.shape[1]
    if s.length > L:
        raise ShapeError(f"shapelet length {s.length} exceeds series length {L}")
    lo, hi = _window_bounds(s.position, s.length, L, window)
    lo = min(lo, L - s.length)
    hi = max(hi, lo)
    windows = sliding_window_view(x[s.channel].astype(np.float64), s.length)[lo : hi + 1]
    d2 = ((windows - s.values.astype(np.float64)) ** 2).sum(axis=1)
    best = int(np.argmin(d2))
    if counter is not None:
        counter.distance_evals += 1
        counter.alignment_ops += hi - lo + 1
    return math.sqrt(d2[best]), lo + best


def constrained_distance(s: Candidate, x, window: int, counter: OpCounter | None = None) -> float:
    """Minimum Euclidean distance of ``s`` to ``x`` over positions within ``window`` of its origin."""
    return _best_match(s, x, window, counter)[0]


def full_distance(s: Candidate, x, counter: OpCounter | None = None) -> float:
    """Minimum Euclidean distance of ``s`` over every alignment in ``x``."""
    return _best_match(s, x, None, counter)[0]


@numba.njit(cache=True)
def _entropy(counts, total):
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / total
            h -= p * math.log2(p)
    return h


@numba.njit(cache=True)
def _best_split(dists, labels, n_classes):
    n = dists.shape[0]
    order = np.argsort(dists, kind="mergesort")
    total = np.zeros(n_classes, dtype=np.int64)
    for a in range(n):
        total[labels[a]] += 1
    h_all = _entropy(total, n)
    left = np.zeros(n_classes, dtype=np.int64)
    right = total.copy()
    best_ig = -1.0
    best_delta = dists[order[n - 1]]
    for t in range(n - 1):
        lab = labels[order[t]]
        left[lab] += 1
        right[lab] -= 1
        lo = dists[order[t]]
        nxt = dists[order[t + 1]]
        if nxt <= lo:
            continue
        n_left = t + 1
        n_right = n - n_left
        ig = h_all - (n_left / n) * _entropy(left, n_left) - (n_right / n) * _entropy(right, n_right)
        if ig > best_ig + IG_TIE_TOL:
            best_ig = ig
            best_delta = 0.5 * (lo + nxt)
    if best_ig < 0.0:
        best_ig = 0.0
    return best_ig, best_delta


def information_gain(distances, labels, n_classes: int | None = None) -> tuple[float, float]:
    """Best threshold split of ``distances`` by information gain (bits).

    Thresholds are midpoints between consecutive distinct sorted distances; a
    series falls on the near side when its distance is ``<= delta``. Ties in gain
    go to the smallest threshold.
    """
    dists = np.asarray(distances, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if dists.shape != labels.shape or dists.ndim != 1:
        raise ShapeError("distances and labels must be equal-length vectors")
    if len(dists) < 2 or len(np.unique(labels)) < 2:
        raise DegenerateError("information gain needs at least two distinct labels")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    ig, delta = _best_split(dists, labels, n_classes)
    return float(ig), float(delta)


@numba.njit(cache=True, parallel=True)
def _score_kernel(X, table, scored, labels, n_classes, window, full_scan, ig_out, delta_out, ops_out):
    L = X.shape[2]
    n = scored.shape[0]
    for ci in numba.prange(table.shape[0]):
        i = table[ci, 0]
        ch = table[ci, 1]
        j = table[ci, 2]
        l = table[ci, 3]
        if full_scan:
            lo = 0
            hi = L - l
        else:
            lo = max(0, j - window)
            hi = min(L - l, j + window)
        dists = np.empty(n)
        for a in range(n):
            row = scored[a]
            best = np.inf
            for jp in range(lo, hi + 1):
                acc = 0.0
                for t in range(l):
                    diff = X[row, ch, jp + t] - X[i, ch, j + t]
                    acc += diff * diff
                if acc < best:
                    best = acc
            dists[a] = math.sqrt(best)
        ops_out[ci] = n * (hi - lo + 1)
        ig, delta = _best_split(dists, labels, n_classes)
        ig_out[ci] = ig
        delta_out[ci] = delta


def _rank(table: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Indices sorted by score descending, ties by (series, channel, position, length)."""
    rounded = np.round(scores, SCORE_DECIMALS)
    return np.lexsort((table[:, 3], table[:, 2], table[:, 1], table[:, 0], -rounded))


def _score(d: Dataset, table, scored, window, full_scan):
    m = len(table)
    ig = np.empty(m)
    delta = np.empty(m)
    ops = np.zeros(m, dtype=np.int64)
    if m:
        X = d.X.astype(np.float64)
        _score_kernel(X, table, scored.astype(np.int64), d.y[scored], d.n_classes, window, full_scan, ig, delta, ops)
    return ig, delta, ops


def _check_classes(d: Dataset, scored: np.ndarray) -> None:
    if len(np.unique(d.y)) < 2:
        raise DegenerateError("discovery needs at least two classes")
    if len(np.unique(d.y[scored])) < 2:
        raise DegenerateError("the retained scoring subset holds a single class; lower the prune ratio")


def discover(
    d: Dataset, cfg: DiscoveryConfig, counter: OpCounter | None = None
) -> tuple[ShapeletPool, OpCounter]:
    """Pruned, position-constrained shapelet discovery.

    Candidates come from the retained ``ceil((1-p) N)`` series. Distances are
    scored against the same retained subset, or against all ``N`` series when
    ``cfg.score_full`` is set.
    """
    cfg = cfg.resolved(d.length)
    counter = counter if counter is not None else OpCounter()
    retained = retained_indices(d.n, cfg.prune, cfg.seed)
    scored = np.arange(d.n) if cfg.score_full else retained
    _check_classes(d, scored)
    table = _candidate_table(d, cfg, retained)
    counter.candidates_generated += len(table)
    ig, delta, ops = _score(d, table, scored, cfg.window, False)
    counter.distance_evals += len(table) * len(scored)
    counter.alignment_ops += int(ops.sum())
    return _build_pool(d, table, ig, delta, cfg), counter


def discover_full_scan(
    d: Dataset, cfg: DiscoveryConfig, counter: OpCounter | None = None
) -> tuple[ShapeletPool, OpCounter]:
    """Conventional discovery: every series, every alignment. Same kernel, no constraints."""
    cfg = replace(cfg.resolved(d.length), prune=0.0)
    counter = counter if counter is not None else OpCounter()
    series = np.arange(d.n)
    _check_classes(d, series)
    table = _candidate_table(d, cfg, series)
    counter.candidates_generated += len(table)
    ig, delta, ops = _score(d, table, series, cfg.window, True)
    counter.distance_evals += len(table) * d.n
    counter.alignment_ops += int(ops.sum())
    return _build_pool(d, table, ig, delta, cfg), counter


def _build_pool(d, table, ig, delta, cfg) -> ShapeletPool:
    order = _rank(table, ig)[: cfg.k]
    shapelets = [
        Shapelet(_make_candidate(d, *table[o]), float(ig[o]), float(delta[o])) for o in order
    ]
    return ShapeletPool(shapelets, cfg.window)


def _reference_gain(distances: Sequence[float], labels: Sequence[int]) -> tuple[float, float]:
    def entropy(labs):
        counts = Counter(labs)
        total = len(labs)
        return -sum((c / total) * math.log2(c / total) for _, c in sorted(counts.items()))

    pairs = sorted(zip(distances, labels))
    values = sorted(set(distances))
    base = entropy(list(labels))
    best_ig, best_delta = -1.0, values[-1]
    for a, b in zip(values, values[1:]):
        delta = 0.5 * (a + b)
        near = [lab for dist, lab in pairs if dist <= delta]
        far = [lab for dist, lab in pairs if dist > delta]
        n = len(pairs)
        ig = base - len(near) / n * entropy(near) - len(far) / n * entropy(far)
        if ig > best_ig + IG_TIE_TOL:
            best_ig, best_delta = ig, delta
    return max(best_ig, 0.0), best_delta


def reference_discover(d: Dataset, cfg: DiscoveryConfig) -> ShapeletPool:
    """Brute-force oracle: all series, unconstrained distances, exhaustive thresholds."""
    cfg = cfg.resolved(d.length)
    scored = []
    for i in range(d.n):
        for ch in range(d.channels):
            for l in cfg.lengths():
                for j in range(d.length - l + 1):
                    cand = _make_candidate(d, i, ch, j, l)
                    dists = [full_distance(cand, d.X[n]) for n in range(d.n)]
                    ig, delta = _reference_gain(dists, list(d.y))
                    scored.append((cand, ig, delta))
    scored.sort(key=lambda t: (-round(t[1], SCORE_DECIMALS), t[0].key))
    shapelets = [Shapelet(c, ig, delta) for c, ig, delta in scored[: cfg.k]]
    return ShapeletPool(shapelets, cfg.window)


def shapelet_transform(x, pool: ShapeletPool, window: int | None = None) -> np.ndarray:
    """Vector of constrained distances from ``x`` to every pooled shapelet, in pool order."""
    if len(pool) == 0:
        raise ShapeError("empty shapelet pool")
    window = pool.window if window is None else window
    return np.array([constrained_distance(s.candidate, x, window) for s in pool])


def transform_dataset(X: np.ndarray, pool: ShapeletPool, window: int | None = None) -> np.ndarray:
    """Batched shapelet transform of ``[B, C, L]`` series into ``[B, k]`` features."""
    from shapecond.nn import strans_forward

    window = pool.window if window is None else window
    feats, _ = strans_forward(np.asarray(X, dtype=np.float64), pool, window)
    return feats
