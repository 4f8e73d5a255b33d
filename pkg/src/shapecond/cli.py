"""Command-line entry point: ``shapecond <stage> [flags]``.

Exit codes: 0 success, 1 usage error, 2 runtime error. Every stage accepts
``--config FILE`` with ``key = value`` lines; explicit flags win over the file,
which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import resource
import sys
from dataclasses import replace
from pathlib import Path

from shapecond import __version__
from shapecond.errors import ShapeCondError

log = logging.getLogger("shapecond")

THREADS_ENV = "SHAPECOND_THREADS"
# Flags that never reach the provenance header: they do not change results.
_NON_RESULT_KEYS = {"command", "config", "verbose", "handler"}
_REQUIRED = {
    "gen-toy": ("out",),
    "discover": ("data", "out"),
    "teach": ("data", "pool", "out"),
    "synthesize": ("teacher", "data", "out"),
    "eval": ("condensed", "test", "report"),
    "grid": ("condensed", "test"),
    "bench": ("data", "out"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_hash() -> str:
    """Short digest of the package sources, identifying the exact build."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:12]


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common")
    g.add_argument("--seed", type=int, default=0, help="seed for all randomness in this stage")
    g.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    g.add_argument("--config", default=None, help="key = value file with flag defaults")
    g.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True, help="z-normalize input series")
    g.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="shapecond", description="Shapelet-guided time-series dataset condensation.")
    parser.add_argument("--version", action="version", version=f"shapecond {__version__} (build {build_hash()})")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-toy", help="write a synthetic dataset with planted motifs")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--len", dest="length", type=int, default=128)
    p.add_argument("--motif-len", type=int, default=16)
    p.add_argument("--jitter", type=int, default=8)
    p.add_argument("--noise", dest="noise_sigma", type=float, default=0.5)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--out", help="dataset path; motif positions go to OUT.motifs")
    p.set_defaults(handler=cmd_gen_toy)

    p = sub.add_parser("discover", help="find the top-k shapelets")
    p.add_argument("--data")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--prune", type=float, default=0.5)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--lmin", type=int, default=None)
    p.add_argument("--lmax", type=int, default=None)
    p.add_argument("--length-stride", type=int, default=None)
    p.add_argument("--score-full", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_discover)

    p = sub.add_parser("teach", help="train the shapelet-augmented teacher")
    p.add_argument("--data")
    p.add_argument("--pool")
    p.add_argument("--val", default=None, help="validation dataset for early stopping")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--wd", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--balance", action=argparse.BooleanOptionalAction, default=True, help="oversample minority classes")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_teach)

    p = sub.add_parser("synthesize", help="condense the training set against a frozen teacher")
    p.add_argument("--teacher")
    p.add_argument("--pool", default=None, help="override the pool path recorded in the checkpoint")
    p.add_argument("--data")
    p.add_argument("--spc", type=int, default=10)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--beta1", type=float, default=0.5)
    p.add_argument("--beta2", type=float, default=0.9)
    p.add_argument("--bn-weight", type=float, default=1.0)
    p.add_argument("--ablate-shapelets", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--random", action=argparse.BooleanOptionalAction, default=False, help="skip optimization (random-selection reference)")
    p.add_argument("--loss-csv", default=None)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_synthesize)

    p = sub.add_parser("eval", help="train students on a condensed set and report accuracy")
    p.add_argument("--condensed")
    p.add_argument("--test")
    p.add_argument("--train", default=None, help="full training set for the accuracy ratio")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--wd", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("grid", help="rank an architecture grid on a condensed set")
    p.add_argument("--condensed")
    p.add_argument("--test")
    p.add_argument("--grid", choices=("small", "full"), default="small")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--wd", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--out", default=None, help="ranking CSV (stdout when omitted)")
    p.set_defaults(handler=cmd_grid)

    p = sub.add_parser("bench", help="count alignment ops of constrained vs full-scan discovery")
    p.add_argument("--data")
    p.add_argument("--prune", type=float, nargs="+", default=[0.5])
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--fixed-len", type=int, default=None, help="shorthand for --lmin = --lmax")
    p.add_argument("--lmin", type=int, default=None)
    p.add_argument("--lmax", type=int, default=None)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--max-ops", type=float, default=1e9)
    p.add_argument("--timing", action=argparse.BooleanOptionalAction, default=True, help="record wall-clock columns")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_bench)

    for p in sub.choices.values():
        _common(p)
    return parser


# -- config handling -----------------------------------------------------------


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _convert(action: argparse.Action, text: str):
    if isinstance(action, argparse.BooleanOptionalAction):
        return _bool(text)
    conv = action.type or str
    try:
        if action.nargs in ("+", "*"):
            return [conv(t) for t in text.replace(",", " ").split()]
        value = conv(text)
    except ValueError:
        raise UsageError(f"config value {text!r} is invalid for {action.dest}") from None
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"config value {text!r} is not one of {sorted(action.choices)}")
    return value


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
        defaults = {}
        for key, text in read_config(args.config).items():
            if key not in actions:
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            defaults[key] = _convert(actions[key], text)
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    missing = [f"--{k.replace('_', '-')}" for k in _REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        raise UsageError(f"shapecond {args.command}: missing required {', '.join(missing)}")
    if args.threads is None:
        env = os.environ.get(THREADS_ENV)
        try:
            args.threads = int(env) if env else 1
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    return args


def provenance(args) -> list[str]:
    """The effective configuration as ``key = value`` lines."""
    items = {k: v for k, v in vars(args).items() if k not in _NON_RESULT_KEYS}
    lines = [f"shapecond {__version__} {args.command}"]
    lines += [f"{k} = {' '.join(map(str, v)) if isinstance(v, list) else v}" for k, v in sorted(items.items())]
    return lines


def set_threads(n: int) -> None:
    import numba
    from threadpoolctl import threadpool_limits

    import shapecond.shapelets  # noqa: F401  (selects the numba threading layer first)

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    threadpool_limits(n)


# -- stages --------------------------------------------------------------------


def _load_train(path, args, label_names=None):
    from shapecond.data import load_dataset, znormalize

    d = load_dataset(path, label_names)
    return znormalize(d) if args.normalize else d


def cmd_gen_toy(args) -> None:
    from shapecond.data import save_dataset
    from shapecond.toy import gen_toy, save_truth

    d, truth = gen_toy(
        args.classes, args.n, args.length, args.motif_len, args.jitter, args.noise_sigma, args.amplitude, args.seed
    )
    save_dataset(d, args.out, provenance(args))
    save_truth(truth, f"{args.out}.motifs")


def cmd_discover(args) -> None:
    from shapecond.shapelets import DiscoveryConfig, discover, save_pool

    d = _load_train(args.data, args)
    cfg = DiscoveryConfig(
        prune=args.prune, window=args.window, l_min=args.lmin, l_max=args.lmax,
        k=args.k, seed=args.seed, length_stride=args.length_stride, score_full=args.score_full,
    )
    pool, counter = discover(d, cfg)
    log.info("discover: %d candidates, %d alignment ops", counter.candidates_generated, counter.alignment_ops)
    save_pool(pool, args.out, provenance(args))


def cmd_teach(args) -> None:
    from shapecond.data import oversample_balance
    from shapecond.shapelets import load_pool
    from shapecond.teacher import save_teacher, train_teacher
    from shapecond.training import TrainConfig

    d = _load_train(args.data, args)
    if args.balance:
        d = oversample_balance(d, args.seed)
    val = _load_train(args.val, args, d.label_names) if args.val else None
    pool = load_pool(args.pool)
    cfg = TrainConfig(args.lr, args.wd, args.epochs, args.batch_size, args.seed, args.patience)
    model = train_teacher(d, pool, cfg, window=pool.window, val=val)
    save_teacher(model, args.out, args.pool, provenance(args))


def cmd_synthesize(args) -> None:
    from shapecond.data import save_condensed
    from shapecond.synthesis import SynthConfig, ablated_teacher, init_condensed, synthesize
    from shapecond.teacher import load_teacher

    teacher = load_teacher(args.teacher, args.pool)
    d = _load_train(args.data, args, teacher.label_names or None)
    if args.ablate_shapelets:
        teacher = ablated_teacher(teacher)
    cfg = SynthConfig(args.spc, args.iters, args.lr, (args.beta1, args.beta2), args.bn_weight, args.seed)
    init = init_condensed(d, cfg.spc, cfg.seed)
    trace: list = []
    c = init if args.random else synthesize(teacher, init, cfg, trace)
    c.validate()
    save_condensed(c, args.out, provenance(args))
    if args.loss_csv:
        rows = ["iteration,task_loss,bn_loss,total"] + [f"{i},{t!r},{b!r},{s!r}" for i, t, b, s in trace]
        Path(args.loss_csv).write_text("\n".join(rows) + "\n", encoding="utf-8")


def _student_cfg(args):
    from shapecond.evaluation import STUDENT_CONFIG

    return replace(STUDENT_CONFIG, lr=args.lr, weight_decay=args.wd, epochs=args.epochs, seed=args.seed)


def _load_eval_inputs(args):
    from shapecond.data import load_condensed

    c = load_condensed(args.condensed)
    return c, _load_train(args.test, args, c.label_names)


def cmd_eval(args) -> None:
    from shapecond.evaluation import evaluate_condensed

    c, test = _load_eval_inputs(args)
    train = _load_train(args.train, args, c.label_names) if args.train else None
    seeds = [args.seed + i for i in range(args.seeds)]
    config = dict(line.split(" = ", 1) for line in provenance(args)[1:])
    report = evaluate_condensed(c, test, seeds, train, cfg=_student_cfg(args), config=config)
    Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(f"student accuracy {report.student_accuracy:.4f}" + (
        f", ratio {report.accuracy_ratio:.4f}" if report.accuracy_ratio is not None else ""))


def cmd_grid(args) -> None:
    from shapecond.evaluation import grid_search, make_grid

    c, test = _load_eval_inputs(args)
    ranking = grid_search(c, test, make_grid(args.grid), _student_cfg(args))
    lines = [f"# {line}" for line in provenance(args)] + ["rank,arch,accuracy"]
    lines += [f"{i},{arch.name},{acc!r}" for i, (arch, acc) in enumerate(ranking, 1)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_bench(args) -> None:
    from shapecond.bench import bench_sweep, write_bench_csv
    from shapecond.shapelets import DiscoveryConfig

    d = _load_train(args.data, args)
    lmin, lmax = args.lmin, args.lmax
    if args.fixed_len is not None:
        lmin = lmax = args.fixed_len
    cfg = DiscoveryConfig(prune=args.prune[0], window=args.window, l_min=lmin, l_max=lmax, k=args.k, seed=args.seed)
    results = bench_sweep(d, cfg, args.prune, max_ops=int(args.max_ops))
    # Peak RSS is environment-dependent, so it is logged rather than written.
    log.info("peak RSS %.1f MiB", resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024)
    write_bench_csv(results, args.out, provenance(args), timing=args.timing)
    for r in results:
        print(f"p={r.p}: measured {r.measured_ratio:.3f} predicted {r.predicted_ratio:.3f}")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        set_threads(args.threads)
        args.handler(args)
    except (ShapeCondError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
