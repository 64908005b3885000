"""``anchorfuse`` command line interface.

Exit codes: 0 success, 1 stage failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import os
import sys

from filelock import Timeout

from . import __version__, pipeline
from .aggregation import STRATEGIES
from .alignment import DEFAULT_ALPHA
from .data_io import DEFAULT_DELTA, DEFAULT_FRACTIONS
from .diagnostics import fmt
from .errors import AnchorFuseError
from .readout import TrainConfig
from .synthetic import SyntheticSpec, benchmark

log = logging.getLogger("anchorfuse")


class UsageError(Exception):
    pass


def _fractions(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fractions {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated fractions")
    return parts


def _named_path(text: str) -> tuple[str, str]:
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    return name, path


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="single source of randomness (default 42)")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    def with_run(p, required=True):
        p.add_argument("--run", required=required, help="run directory")
        return p

    def train_flags(p):
        p.add_argument("--head", choices=["binary", "multiclass"], default="binary")
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--batch-size", type=int, default=64)
        p.add_argument("--max-epochs", type=int, default=200)
        p.add_argument("--patience", type=int, default=10)

    parser = argparse.ArgumentParser(prog="anchorfuse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"anchorfuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = with_run(sub.add_parser("ingest", parents=[common], help="copy a manifest and encoder stores into a run"), required=False)
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", type=_named_path, nargs="+", required=True, metavar="NAME=PATH")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--split", type=_fractions, default=DEFAULT_FRACTIONS)
    p.add_argument("--out", help="run directory (alias of --run)")

    p = with_run(sub.add_parser("synth", parents=[common], help="generate a synthetic run"), required=False)
    p.add_argument("--spec", help="JSON file with SyntheticSpec fields (defaults if omitted)")
    p.add_argument("--split", type=_fractions, default=DEFAULT_FRACTIONS)
    p.add_argument("--out", help="run directory (alias of --run)")

    p = with_run(sub.add_parser("fit-align", parents=[common], help="fit ridge maps into the anchor space"))
    p.add_argument("--anchor", required=True)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--sources", nargs="*", help="source encoders (default: every non-anchor encoder)")

    p = with_run(sub.add_parser("fuse", parents=[common], help="aggregate aligned views"))
    p.add_argument("--strategy", choices=STRATEGIES, default="aligned_mean")

    p = with_run(sub.add_parser("train", parents=[common], help="train fused and baseline readouts"))
    train_flags(p)

    p = with_run(sub.add_parser("evaluate", parents=[common], help="predict a split and write metrics.csv"))
    p.add_argument("--split", choices=["train", "val", "test"], default="test")

    p = with_run(sub.add_parser("diagnose", parents=[common], help="overlap, transitions, confidence shifts"))
    p.add_argument("--against", help="baseline model tag (default: the anchor)")

    p = with_run(sub.add_parser("occlude", parents=[common], help="sentence occlusion for one document"))
    p.add_argument("--doc", required=True)
    p.add_argument("--variants", required=True, help="directory of NAME.embd occluded variants")
    p.add_argument("--model", default=pipeline.FUSED_TAG)
    p.add_argument("--target-class", type=int, default=1)

    p = with_run(sub.add_parser("run", parents=[common], help="fit-align, fuse, train, evaluate, diagnose"))
    p.add_argument("--anchor", required=True)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--sources", nargs="*")
    p.add_argument("--strategy", choices=STRATEGIES, default="aligned_mean")
    p.add_argument("--against")
    train_flags(p)

    p = sub.add_parser("compare", parents=[common], help="tabulate fused test metrics across runs")
    p.add_argument("runs", nargs="*")
    p.add_argument("--out", help="CSV path (default: stdout)")

    p = sub.add_parser("benchmark", parents=[common], help="compare strategies on a synthetic spec")
    p.add_argument("--spec")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--out", help="CSV path (default: stdout)")
    return parser


def _run_dir(args) -> str:
    path = getattr(args, "out", None) or getattr(args, "run", None)
    if not path:
        raise UsageError(f"{args.command} needs --out or --run")
    return path


def _write_rows(rows, out_path):
    with (open(out_path, "w", encoding="utf-8", newline="") if out_path else contextlib.nullcontext(sys.stdout)) as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def dispatch(args):
    cmd = args.command
    if cmd == "ingest":
        pipeline.ingest(_run_dir(args), args.manifest, dict(args.embeddings), args.delta, args.split)
    elif cmd == "synth":
        spec = SyntheticSpec.from_file(args.spec) if args.spec else SyntheticSpec()
        pipeline.synth(_run_dir(args), spec, args.split)
    elif cmd == "fit-align":
        pipeline.fit_align(args.run, args.anchor, args.alpha, args.sources or None)
    elif cmd == "fuse":
        pipeline.fuse_stage(args.run, args.strategy)
    elif cmd == "train":
        pipeline.train_stage(args.run, args.head, args.seed, _train_config(args))
    elif cmd == "evaluate":
        pipeline.evaluate_stage(args.run, args.split)
    elif cmd == "diagnose":
        pipeline.diagnose_stage(args.run, args.against)
    elif cmd == "occlude":
        results = pipeline.occlude(args.run, args.doc, args.variants, args.model, args.target_class)
        log.info("wrote %d occlusion rows", len(results))
    elif cmd == "run":
        config = pipeline.RunConfig(
            anchor=args.anchor,
            alpha=args.alpha,
            sources=args.sources or None,
            strategy=args.strategy,
            head=args.head,
            seed=args.seed,
            train=_train_config(args),
            against=args.against,
        )
        pipeline.run_pipeline(args.run, config)
    elif cmd == "compare":
        if not args.runs:
            raise UsageError("compare needs at least one run directory")
        _write_rows(pipeline.compare_runs(args.runs), args.out)
    elif cmd == "benchmark":
        spec = SyntheticSpec.from_file(args.spec) if args.spec else SyntheticSpec()
        rows = benchmark(spec, seed=args.seed, alpha=args.alpha)
        table = [["label", "strategy", "anchor", "sources", "accuracy", "f1", "roc_auc"]]
        table += [[r.label, r.strategy, r.anchor, "+".join(r.sources), r.accuracy, r.f1, r.roc_auc] for r in rows]
        _write_rows(table, args.out)


def _thread_limit():
    value = os.environ.get("ANCHORFUSE_THREADS")
    if not value:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(value)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        with _thread_limit():
            dispatch(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"anchorfuse: error: {exc}", file=sys.stderr)
        return 2
    except Timeout:
        print(f"anchorfuse: {args.command}: run directory is locked by another process", file=sys.stderr)
        return 1
    except (AnchorFuseError, OSError, ValueError) as exc:
        print(f"anchorfuse: stage {args.command!r} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
