"""Command-line entry point: train, predict, evaluate, synth, inspect, sweep.

Every command takes --threads (default 1) and --deterministic; the
deterministic flag pins BLAS pools to one thread so repeated runs with the
same seed write byte-identical bundles, predictions, and reports.  Timing is
printed to stdout only, never into output files, for the same reason.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from threadpoolctl import threadpool_limits

from labelsieve import __version__
from labelsieve.config import DEFAULTS, resolve_config
from labelsieve.dataset import generate_synthetic, label_stats, parse_corpus, serialize_corpus
from labelsieve.errors import LabelSieveError
from labelsieve.features import load_table, random_table
from labelsieve.inference import PredictConfig, predict_batch, write_predictions
from labelsieve.metrics import (
    compute_report,
    format_report,
    propensities,
    report_csv,
    sweep,
)
from labelsieve.seeding import STAGE_TABLE, stage_rng
from labelsieve.trainer import load_bundle, run_training, save_bundle


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1,
                   help="BLAS/worker thread cap (default 1)")
    p.add_argument("--deterministic", action="store_true",
                   help="force single-threaded execution for bit-reproducible output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelsieve",
        description="extreme multi-label classification via label-embedding "
                    "shortlists and sparse one-vs-all training")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save the bundle")
    p.add_argument("--data", required=True, help="training corpus file")
    p.add_argument("--model", required=True, help="output bundle path")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="config override, repeatable; beats the config file")
    p.add_argument("--seed", type=int, default=None, help="root seed (beats config)")
    p.add_argument("--embeddings", default=None,
                   help="word-embedding table file; default is a seeded random table")
    _common_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write per-point label:score predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--beta", type=float, default=None, help="override the bundle's beta")
    p.add_argument("--topk", type=int, default=None, help="labels per point")
    _common_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="P@k and PSP@k for k in {1,3,5}")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="evaluation corpus")
    p.add_argument("--train-data", default=None,
                   help="corpus for propensity label counts (default: --data)")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--report", default=None, help="write the table to this file")
    p.add_argument("--csv", default=None, help="write metrics as CSV")
    _common_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a separable synthetic corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--labels", type=int, default=100)
    p.add_argument("--features", type=int, default=0,
                   help="vocabulary size (default: same as --dim)")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--zipf", type=float, default=1.1)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--max-labels", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    _common_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="print corpus statistics")
    p.add_argument("--data", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("sweep", help="evaluate one bundle across beta values")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--param", default="beta", choices=["beta"])
    p.add_argument("--values", default="0,0.25,0.5,0.75,1.0",
                   help="comma-separated values")
    p.add_argument("--csv", default=None)
    _common_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def _load_bundle_checked(path: str):
    if not Path(path).exists():
        raise LabelSieveError(f"bundle not found: {path}")
    return load_bundle(path)


def _echo_config(cfg: dict) -> None:
    print("effective config:")
    for key in DEFAULTS:
        print(f"  {key}={cfg[key]}")


def cmd_train(args) -> int:
    cfg = resolve_config(args.config, args.override)
    if args.seed is not None:
        cfg["seed"] = args.seed
    _echo_config(cfg)
    corpus = parse_corpus(Path(args.data))
    if args.embeddings is not None:
        table = load_table(Path(args.embeddings))
    else:
        table = random_table(corpus.n_features, cfg["embed_dim"],
                             stage_rng(cfg["seed"], STAGE_TABLE))
    start = time.perf_counter()
    bundle = run_training(corpus, cfg, table, log=print)
    elapsed = time.perf_counter() - start
    save_bundle(bundle, args.model)
    print(f"train seconds: {elapsed:.2f}")
    print(f"saved bundle: {args.model}")
    return 0


def _timed_predict(bundle, corpus, config):
    start = time.perf_counter()
    pred = predict_batch(bundle, corpus, config)
    elapsed = time.perf_counter() - start
    ms = 1000.0 * elapsed / max(1, corpus.n_points)
    return pred, ms


def _predict_config(bundle, corpus, beta=None, topk=None) -> PredictConfig:
    cfg = bundle.config
    k_sl = min(int(cfg["shortlist_k"]), corpus.n_labels)
    k_out = int(cfg["k_output"]) if topk is None else topk
    return PredictConfig(
        beta=float(cfg["beta"]) if beta is None else beta,
        k_shortlist=k_sl,
        k_output=min(k_out, k_sl),
    )


def cmd_predict(args) -> int:
    bundle = _load_bundle_checked(args.model)
    corpus = parse_corpus(Path(args.data))
    pred, ms = _timed_predict(bundle, corpus,
                              _predict_config(bundle, corpus, args.beta, args.topk))
    write_predictions(pred, args.output)
    print(f"predict ms/point: {ms:.3f}")
    print(f"wrote predictions: {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    bundle = _load_bundle_checked(args.model)
    corpus = parse_corpus(Path(args.data))
    pred, ms = _timed_predict(bundle, corpus,
                              _predict_config(bundle, corpus, args.beta))
    stats_corpus = parse_corpus(Path(args.train_data)) if args.train_data else corpus
    prop = propensities(label_stats(stats_corpus),
                        float(bundle.config["propensity_a"]),
                        float(bundle.config["propensity_b"]))
    report = compute_report(pred, corpus, prop)
    text = format_report(report)
    print(text, end="")
    print(f"predict ms/point: {ms:.3f}")
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(report_csv(report), encoding="utf-8")
    return 1 if report.has_nan() else 0


def cmd_synth(args) -> int:
    n_features = args.features if args.features > 0 else args.dim
    corpus, _ = generate_synthetic(
        args.points, args.labels, n_features, args.dim,
        zipf_exponent=args.zipf, noise=args.noise, seed=args.seed,
        max_labels_per_point=args.max_labels)
    serialize_corpus(corpus, args.output)
    print(f"wrote {corpus.n_points} points, {corpus.n_labels} labels, "
          f"{corpus.n_features} features: {args.output}")
    return 0


def cmd_inspect(args) -> int:
    corpus = parse_corpus(Path(args.data))
    stats = label_stats(corpus)
    n_pos = sum(len(pt.positives) for pt in corpus.points)
    n_feat = sum(len(pt.features) for pt in corpus.points)
    empty_pts = sum(1 for pt in corpus.points if len(pt.positives) == 0)
    print(f"points {corpus.n_points}  features {corpus.n_features}  labels {corpus.n_labels}")
    if corpus.n_points:
        print(f"avg positives/point {n_pos / corpus.n_points:.3f}  "
              f"avg features/point {n_feat / corpus.n_points:.3f}")
    print(f"points with no positives {empty_pts}")
    print(f"labels never positive {int((stats.frequency == 0).sum())}")
    top = stats.frequency.argsort()[::-1][:5]
    pairs = " ".join(f"{int(l)}:{int(stats.frequency[l])}" for l in top)
    print(f"most frequent labels {pairs}")
    w = corpus.warnings
    print(f"parse warnings: duplicate features {w.duplicate_features}, "
          f"duplicate labels {w.duplicate_labels}, zero weights {w.zero_weights_dropped}")
    return 0


def cmd_sweep(args) -> int:
    bundle = _load_bundle_checked(args.model)
    corpus = parse_corpus(Path(args.data))
    values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    rows = sweep(bundle, corpus, args.param, values)
    print(f"{args.param:>8}  {'P@1':>8}  {'PSP@1':>8}")
    lines = [f"{args.param},p_at_1,psp_at_1"]
    for value, p1, psp1 in rows:
        print(f"{value:8.3f}  {100 * p1:8.4f}  {100 * psp1:8.4f}")
        lines.append(f"{value},{100 * p1:.4f},{100 * psp1:.4f}")
    if args.csv:
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = 1 if args.deterministic else max(1, args.threads)
    try:
        with threadpool_limits(limits=threads):
            return args.func(args)
    except (LabelSieveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
