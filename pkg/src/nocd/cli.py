"""Command-line entry point: train, eval, generate, convergence, inductive.

Every command is deterministic given --seed, writes its outputs under
--out-dir, and finishes by atomically writing a manifest.json that
records the exact configuration. Exit codes: 0 success, 1 runtime or
data error, 2 usage or file-format error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, _kernels, graph, metrics, models, nn, synthetic, training
from .graph import ParseError

DEFAULT_BATCH_SIZES = (1000, 2500, 5000, 10000, 20000)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _max_workers() -> int:
    raw = os.environ.get("NOCD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                    cfg: nn.TrainConfig | None, started: float, extra: dict | None = None):
    manifest = {
        "command": command,
        "tool_version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                 if k != "func"},
        "config": asdict(cfg) if cfg is not None else None,
        "seed": getattr(args, "seed", None),
        "out_dir": str(out_dir),
        "duration_sec": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    tmp = out_dir / "manifest.json.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, out_dir / "manifest.json")


def _write_trace_csv(path: Path, trace: training.TrainTrace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,entries_accessed,full_loss\n")
        for epoch, entries, loss in trace.evaluations:
            fh.write(f"{epoch},{entries},{_fmt(loss)}\n")


def _config_from_args(args: argparse.Namespace) -> nn.TrainConfig:
    return nn.TrainConfig(
        hidden_size=args.hidden,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        dropout_keep=args.dropout_keep,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        eval_every=args.eval_every,
        patience_evals=args.patience,
        threshold=args.threshold,
        seed=args.seed,
    )


def _add_train_flags(p: argparse.ArgumentParser, lr_default: float = 1e-3) -> None:
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--lr", type=float, default=lr_default)
    p.add_argument("--weight-decay", type=float, default=1e-2)
    p.add_argument("--dropout-keep", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=1000)
    p.add_argument("--max-epochs", type=int, default=5000)
    p.add_argument("--eval-every", type=int, default=50)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--threshold", type=float, default=0.5)


def _load_inputs(args, parser, need_truth=False):
    g = graph.load_edge_list(args.graph)
    x = graph.load_features(args.features) if getattr(args, "features", None) else None
    truth = None
    if getattr(args, "truth", None):
        truth = graph.load_communities(args.truth, num_nodes=g.num_nodes)
    elif need_truth:
        parser.error("--truth is required for this command")
    return g, x, truth


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_train(args, parser) -> int:
    started = time.time()
    variant = models.parse_variant(args.variant)
    if variant.input_kind == "attributes" and not args.features:
        parser.error(f"--features is required for variant {variant.name}")
    g, x, truth = _load_inputs(args, parser)
    cfg = _config_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    state, trace = training.train(variant, g, x, args.communities, cfg)
    f = training.predict_affiliations(variant, state, g, x)
    assignment = models.assign_communities(f, cfg.threshold)

    if variant.kind == "free_variable":
        np.savez(out_dir / "checkpoint.npz", format_version=np.int64(nn.CHECKPOINT_VERSION),
                 kind="free", f=f)
    else:
        nn.save_parameter_set(out_dir / "checkpoint.npz", state, kind=variant.name)
    models.save_affiliations(out_dir / "affiliations.txt", f, cfg.threshold)
    graph.save_communities(assignment.membership, out_dir / "communities.txt")
    _write_trace_csv(out_dir / "trace.csv", trace)

    extra = {
        "best_full_loss": trace.best_loss,
        "best_epoch": trace.best_epoch,
        "stopped_reason": trace.stopped_reason,
    }
    if truth is not None:
        try:
            extra["nmi"] = metrics.nmi_from_affiliations(f, truth, cfg.threshold)
        except metrics.CoverError:
            extra["nmi"] = None
    _write_manifest(out_dir, "train", args, cfg, started, extra)
    print(f"variant={variant.name} best_full_loss={_fmt(trace.best_loss)} "
          f"best_epoch={trace.best_epoch} stopped={trace.stopped_reason}")
    if "nmi" in extra and extra["nmi"] is not None:
        print(f"nmi={_fmt(extra['nmi'])}")
    return 0


def cmd_eval(args, parser) -> int:
    truth = graph.load_communities(args.truth, num_nodes=args.num_nodes)
    predicted = graph.load_communities(args.predicted, num_nodes=args.num_nodes)
    if truth.num_nodes != predicted.num_nodes:
        raise ValueError(
            f"node-count mismatch: truth has {truth.num_nodes}, "
            f"prediction has {predicted.num_nodes} (use --num-nodes to pin both)"
        )
    nmi = metrics.overlapping_nmi(truth, predicted)
    f1 = metrics.symmetric_agreement(truth, predicted, delta="f1")
    jac = metrics.symmetric_agreement(truth, predicted, delta="jaccard")
    print(f"nmi={_fmt(nmi)}")
    print(f"f1={_fmt(f1)}")
    print(f"jaccard={_fmt(jac)}")
    return 0


def cmd_generate(args, parser) -> int:
    started = time.time()
    if args.num_nodes < 2 or args.communities < 1 or args.within_dot < 0:
        parser.error("invalid plant parameters")
    if not 0.0 <= args.overlap <= 1.0 or not 0.0 <= args.flip_rate <= 1.0:
        parser.error("invalid plant parameters")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    g, truth, f = synthetic.planted_instance(
        args.num_nodes, args.communities, args.within_dot, args.overlap, seed=args.seed
    )
    if g.num_edges == 0:
        print("warning: generated graph has no edges", file=sys.stderr)
    graph.save_edge_list(g, out_dir / "graph.tsv")
    graph.save_communities(truth.membership, out_dir / "communities.txt")
    models.save_affiliations(out_dir / "affiliations.txt", f, 0.5)
    if args.attr_mode != "none":
        x = synthetic.synthetic_attributes(
            truth,
            mode=args.attr_mode,
            flip_rate=args.flip_rate,
            noise_columns=args.noise_cols,
            rng=np.random.default_rng([args.seed, 1]),
        )
        graph.save_features(x, out_dir / "features.txt")
    _write_manifest(out_dir, "generate", args, None, started,
                    {"num_edges": g.num_edges})
    print(f"n={g.num_nodes} m={g.num_edges} c={truth.num_communities}")
    return 0


def cmd_convergence(args, parser) -> int:
    started = time.time()
    variant = models.parse_variant(args.variant)
    if variant.input_kind == "attributes" and not args.features:
        parser.error(f"--features is required for variant {variant.name}")
    g, x, _ = _load_inputs(args, parser)
    cfg = _config_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    batch_sizes = [int(s) for s in args.batch_sizes.split(",") if s]
    total_pairs = g.num_nodes * (g.num_nodes - 1) // 2
    for s in batch_sizes:
        if s > total_pairs:
            print(f"warning: batch size {s} exceeds the {total_pairs} node pairs; "
                  "with-replacement sampling proceeds", file=sys.stderr)

    results = training.convergence_experiment(variant, g, x, args.communities, batch_sizes, cfg)
    for label, trace in results.items():
        safe = label.replace("=", "")
        _write_trace_csv(out_dir / f"trace_{safe}.csv", trace)
    with open(out_dir / "convergence.csv", "w", encoding="utf-8") as fh:
        fh.write("series,epoch,entries_accessed,full_loss\n")
        for label, trace in results.items():
            for epoch, entries, loss in trace.evaluations:
                fh.write(f"{label},{epoch},{entries},{_fmt(loss)}\n")
    _write_manifest(out_dir, "convergence", args, cfg, started,
                    {"series": list(results.keys())})
    print(f"wrote {len(results)} series to {out_dir / 'convergence.csv'}")
    return 0


def cmd_inductive(args, parser) -> int:
    started = time.time()
    g, x, truth = _load_inputs(args, parser, need_truth=True)
    cfg = _config_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    variants = [models.parse_variant(v) for v in args.variants.split(",") if v]
    for v in variants:
        if v.input_kind == "attributes" and x is None:
            parser.error(f"--features is required for variant {v.name}")
        if v.kind == "free_variable":
            parser.error("the free-variable model cannot be evaluated inductively")
    t_grid = [float(t) for t in args.t_grid.split(",") if t]
    seeds = [cfg.seed + i for i in range(args.seeds)]

    tasks = [(t, seed, v) for t in t_grid for seed in seeds for v in variants]

    def run(task):
        t, seed, v = task
        run_cfg = replace(cfg, seed=seed)
        try:
            return training.inductive_evaluate(g, x, truth, t, run_cfg, v)
        except metrics.CoverError:
            return float("nan")

    workers = _max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(run, tasks))
    else:
        scores = [run(task) for task in tasks]

    with open(out_dir / "inductive.csv", "w", encoding="utf-8") as fh:
        fh.write("t,seed,variant,test_nmi\n")
        for (t, seed, v), score in zip(tasks, scores):
            fh.write(f"{_fmt(t)},{seed},{v.name},{_fmt(score)}\n")
    _write_manifest(out_dir, "inductive", args, cfg, started,
                    {"rows": len(tasks)})
    print(f"wrote {len(tasks)} rows to {out_dir / 'inductive.csv'}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nocd",
        description="Overlapping community detection with the Bernoulli-Poisson model",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model variant and write its artifacts")
    p.add_argument("--graph", required=True)
    p.add_argument("--features")
    p.add_argument("--truth")
    p.add_argument("--variant", required=True, choices=models.VARIANT_NAMES)
    p.add_argument("--communities", type=int, required=True)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a predicted cover against the ground truth")
    p.add_argument("--predicted", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--num-nodes", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="write a planted synthetic instance")
    p.add_argument("--num-nodes", type=int, required=True)
    p.add_argument("--communities", type=int, required=True)
    p.add_argument("--within-dot", type=float, default=synthetic.DEFAULT_WITHIN_DOT,
                   help="within-community affiliation dot product (default ln 4)")
    p.add_argument("--overlap", type=float, default=0.0,
                   help="fraction of nodes belonging to two communities")
    p.add_argument("--attr-mode", choices=("noisy", "clean", "noise", "none"),
                   default="noisy")
    p.add_argument("--flip-rate", type=float, default=0.1)
    p.add_argument("--noise-cols", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("convergence", help="batch-size convergence sweep plus full batch")
    p.add_argument("--graph", required=True)
    p.add_argument("--features")
    p.add_argument("--variant", default="nocd-g", choices=models.VARIANT_NAMES)
    p.add_argument("--communities", type=int, required=True)
    p.add_argument("--batch-sizes", default=",".join(str(s) for s in DEFAULT_BATCH_SIZES))
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("inductive", help="hold-out sweep over test fractions and seeds")
    p.add_argument("--graph", required=True)
    p.add_argument("--features")
    p.add_argument("--truth", required=True)
    p.add_argument("--variants", default="nocd-x,nocd-g")
    p.add_argument("--t-grid", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    p.add_argument("--seeds", type=int, default=1)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_inductive)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, metrics.CoverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
