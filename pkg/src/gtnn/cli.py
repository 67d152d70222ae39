"""Command-line entry point: synth, train, eval, ablate, diagnose.

Randomness flows from the --seed/--seeds roots through keyed sub-streams, so
seeds running in parallel (--jobs) produce exactly the same artifacts as a
serial run. A train invocation exits 0 only after its manifest is complete;
on failure partially written artifacts from this invocation are removed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

import gtnn
from gtnn.config import build_train_config, config_help_epilog, parse_config_file
from gtnn.diagnostics import load_trace, write_diagnostics
from gtnn.graph import (DataError, load_graph, read_splits_tsv, sample_negatives,
                        sample_positive_pairs, split, synth_graph, write_edges_tsv,
                        write_nodes_tsv, write_splits_tsv, PairSample)
from gtnn.model import TrainingDivergedError, load_checkpoint, save_checkpoint
from gtnn.textfeat import PairFeaturizer, build_corpus, read_pair_embeddings
from gtnn.trace import TraceWriter
from gtnn.trainer import ablate, evaluate, resolve_embeddings, train

OUT_DIR_ENV = "GTNN_OUT_DIR"


def _default_out_dir() -> str:
    return os.environ.get(OUT_DIR_ENV, "runs")


def _alpha_arg(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must be in [0, 1], got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _groups_arg(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"need at least 2 groups, got {value}")
    return value


def _seeds_arg(text: str) -> list[int]:
    try:
        seeds = [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    over = parser.add_argument_group("config overrides")
    over.add_argument("--curriculum", choices=["none", "sl", "trend_sl"], help="curriculum.mode")
    over.add_argument("--alpha", type=_alpha_arg, help="curriculum.alpha")
    over.add_argument("--lambda", dest="lam", type=_positive_float, help="curriculum.lambda")
    over.add_argument("--k", type=int, help="curriculum.k")
    over.add_argument("--ema-gamma", type=float, help="curriculum.ema_gamma")
    over.add_argument("--d", type=int, help="model.d")
    over.add_argument("--d-e", type=int, help="model.d_e")
    over.add_argument("--d-h", type=int, help="model.d_h")
    over.add_argument("--t-layers", type=int, help="model.t_layers")
    over.add_argument("--lr", type=_positive_float, help="optim.lr")
    over.add_argument("--batch-size", type=int, help="train.batch_size")
    over.add_argument("--max-epochs", type=int, help="train.max_epochs")
    over.add_argument("--patience", type=int, help="train.patience")
    over.add_argument("--threshold", type=float, help="train.eval_threshold")
    over.add_argument("--embedding-init", choices=["file", "random"], help="train.embedding_init")
    over.add_argument("--random-d-in", type=int, help="train.random_d_in")
    over.add_argument("--features-relevance", choices=["on", "off"], help="features.relevance")
    over.add_argument("--features-passthrough", choices=["on", "off"], help="features.passthrough")
    over.add_argument("--features-pair-text", choices=["on", "off"], help="features.pair_text")
    over.add_argument("--pair-text-file", help="data.pair_text_path")


_OVERRIDE_TO_KEY = {
    "curriculum": "curriculum.mode",
    "alpha": "curriculum.alpha",
    "lam": "curriculum.lambda",
    "k": "curriculum.k",
    "ema_gamma": "curriculum.ema_gamma",
    "d": "model.d",
    "d_e": "model.d_e",
    "d_h": "model.d_h",
    "t_layers": "model.t_layers",
    "lr": "optim.lr",
    "batch_size": "train.batch_size",
    "max_epochs": "train.max_epochs",
    "patience": "train.patience",
    "threshold": "train.eval_threshold",
    "embedding_init": "train.embedding_init",
    "random_d_in": "train.random_d_in",
    "features_relevance": "features.relevance",
    "features_passthrough": "features.passthrough",
    "features_pair_text": "features.pair_text",
    "pair_text_file": "data.pair_text_path",
}


def _collect_config(args: argparse.Namespace) -> dict[str, str]:
    values: dict[str, str] = {}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for attr, key in _OVERRIDE_TO_KEY.items():
        flag = getattr(args, attr, None)
        if flag is not None:
            values[key] = str(flag)
    return values


def _load_dataset(args):
    graph = load_graph(args.nodes, args.edges)
    splits = read_splits_tsv(args.splits)
    return graph, splits


def _train_one_seed(payload: tuple) -> dict:
    """Run one seed end to end and write its artifacts (process-pool safe)."""
    nodes, edges, splits_path, config_values, seed, out_dir = payload
    graph = load_graph(nodes, edges)
    splits = read_splits_tsv(splits_path)
    cfg = build_train_config(config_values, seed=seed)
    if config_values.get("data.pair_text_path"):
        cfg.pair_text = read_pair_embeddings(config_values["data.pair_text_path"])

    trace_path = os.path.join(out_dir, f"trace_seed{seed}.csv")
    metrics_path = os.path.join(out_dir, f"metrics_seed{seed}.json")
    checkpoint_path = os.path.join(out_dir, f"checkpoint_seed{seed}.npz")
    with TraceWriter(trace_path) as sink:
        result = train(graph, splits, cfg, trace_sink=sink)
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.metrics_json(cfg))
        fh.write("\n")
    save_checkpoint(checkpoint_path, result.params, cfg.hyper, result.node_ids,
                    meta={"config": cfg.snapshot(), "featurizer": result.featurizer_meta})
    return {
        "seed": seed,
        "test": result.test.to_dict(),
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.records),
        "artifacts": {"checkpoint": checkpoint_path, "metrics": metrics_path,
                      "trace": trace_path},
    }


def _mean_std(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=float)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def cmd_train(args: argparse.Namespace) -> int:
    started = time.monotonic()
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    config_values = _collect_config(args)
    manifest_path = os.path.join(out_dir, "manifest.json")

    payloads = [(args.nodes, args.edges, args.splits, config_values, seed, out_dir)
                for seed in args.seeds]
    created: list[str] = []
    try:
        if args.jobs > 1 and len(args.seeds) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                per_seed = list(pool.map(_train_one_seed, payloads))
        else:
            per_seed = [_train_one_seed(p) for p in payloads]
        for entry in per_seed:
            created.extend(entry["artifacts"].values())
    except (TrainingDivergedError, DataError, ValueError) as exc:
        for seed in args.seeds:
            for stem in (f"trace_seed{seed}.csv", f"metrics_seed{seed}.json", f"checkpoint_seed{seed}.npz"):
                path = os.path.join(out_dir, stem)
                if os.path.exists(path):
                    os.unlink(path)
        if os.path.exists(manifest_path):
            os.unlink(manifest_path)
        print(f"error: {exc}", file=sys.stderr)
        return 1

    manifest = {
        "tool_version": gtnn.__version__,
        "config": config_values,
        "seeds": args.seeds,
        "runs": per_seed,
        "summary": {
            "f1": _mean_std([r["test"]["f1"] for r in per_seed]),
            "precision": _mean_std([r["test"]["precision"] for r in per_seed]),
            "recall": _mean_std([r["test"]["recall"] for r in per_seed]),
        },
        "wall_clock_sec": time.monotonic() - started,
    }
    tmp = manifest_path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, manifest_path)
    summary = manifest["summary"]["f1"]
    print(f"trained {len(args.seeds)} seed(s); test F1 {summary['mean']:.4f} +/- {summary['std']:.4f}")
    print(f"manifest: {manifest_path}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    graph = synth_graph(args.nodes, args.groups, args.p_in, args.p_out,
                        args.d_in, args.noise, args.seed)
    n_pos = args.pos_pairs if args.pos_pairs > 0 else graph.n_edges
    if n_pos > graph.n_edges:
        print(f"error: requested {n_pos} positive pairs but the graph has {graph.n_edges} edges",
              file=sys.stderr)
        return 1
    positives = sample_positive_pairs(graph, n_pos, args.seed)
    negatives = sample_negatives(graph, positives, args.neg_ratio, args.neg_mode, args.seed)
    samples = [PairSample(u=u, v=v, label=1, source="positive") for u, v in positives]
    samples += negatives
    splits = split(samples, (0.8, 0.1, 0.1), args.seed)

    write_nodes_tsv(graph, os.path.join(out_dir, "nodes.tsv"))
    write_edges_tsv(graph, os.path.join(out_dir, "edges.tsv"))
    write_splits_tsv(splits, os.path.join(out_dir, "splits.tsv"))
    print(f"wrote nodes.tsv edges.tsv splits.tsv to {out_dir} "
          f"({graph.n} nodes, {graph.n_edges} edges, {len(samples)} pairs)")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    params, hyper, node_ids, meta = load_checkpoint(args.checkpoint)
    graph = load_graph(args.nodes, args.edges)
    if graph.ids != node_ids:
        print("error: checkpoint node-id map does not match the dataset", file=sys.stderr)
        return 1
    splits = read_splits_tsv(args.splits)
    pairs = getattr(splits, args.split)
    cfg = build_train_config({}, seed=meta["config"]["seed"])
    cfg.embedding_init = meta["config"]["embedding_init"]
    cfg.random_d_in = meta["config"]["random_d_in"]
    toggles = meta["featurizer"]["toggles"]
    cfg.features.relevance = toggles["relevance"]
    cfg.features.passthrough = toggles["passthrough"]
    cfg.features.pair_text = toggles["pair_text"]

    X = resolve_embeddings(graph, cfg)
    stats = build_corpus(graph) if cfg.features.relevance else None
    pair_text = read_pair_embeddings(args.pair_text_file) if args.pair_text_file else None
    featurizer = PairFeaturizer(graph, X, cfg.features, stats, pair_text)
    featurizer.restore_normalization(meta["featurizer"])

    threshold = args.threshold if args.threshold is not None else meta["config"]["eval_threshold"]
    metrics = evaluate(params, pairs, graph, featurizer, X, threshold, hyper.t_layers)
    payload = json.dumps({"split": args.split, "threshold": threshold,
                          "metrics": metrics.to_dict()}, sort_keys=True, indent=1)
    print(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
            fh.write("\n")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    graph, splits = _load_dataset(args)
    config_values = _collect_config(args)
    grid = [tok.strip() for tok in args.grid.split(",") if tok.strip()]
    if not grid:
        print("error: empty ablation grid", file=sys.stderr)
        return 2

    os.makedirs(args.out_dir, exist_ok=True)
    rows = []
    for seed in args.seeds:
        cfg = build_train_config(config_values, seed=seed)
        try:
            for setting, metrics in ablate(graph, splits, cfg, args.axis, grid):
                rows.append((setting, seed, metrics))
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1

    out_path = os.path.join(args.out_dir, f"ablation_{args.axis}.csv")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("setting,seed,precision,recall,f1\n")
        for setting, seed, m in rows:
            fh.write(f"{setting},{seed},{m.precision!r},{m.recall!r},{m.f1!r}\n")
        for setting in grid:
            f1s = [m.f1 for s, _, m in rows if s == setting]
            stats = _mean_std(f1s)
            fh.write(f"{setting},mean,,,{stats['mean']!r}\n")
            fh.write(f"{setting},std,,,{stats['std']!r}\n")
    for setting in grid:
        f1s = [m.f1 for s, _, m in rows if s == setting]
        stats = _mean_std(f1s)
        print(f"{args.axis}={setting}: F1 {stats['mean']:.4f} +/- {stats['std']:.4f}")
    print(f"table: {out_path}")
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    if args.window is not None and args.window < 1:
        print("error: --window must be >= 1", file=sys.stderr)
        return 2
    try:
        trace = load_trace(args.trace)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.window is not None:
        needed = 2 * args.window + 1
        if trace.n_epochs < needed:
            print(f"error: --window {args.window} needs >= {needed} epochs, trace has {trace.n_epochs}",
                  file=sys.stderr)
            return 2
    paths = write_diagnostics(trace, args.out_dir, args.window)
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gtnn",
        description="Link prediction on text-attributed graphs with trend-aware curriculum weighting.",
    )
    parser.add_argument("--version", action="version", version=f"gtnn {gtnn.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a planted-partition dataset",
                             description="Write nodes.tsv, edges.tsv and splits.tsv for a synthetic graph.")
    p_synth.add_argument("--nodes", type=int, default=200, help="number of nodes (default 200)")
    p_synth.add_argument("--groups", type=_groups_arg, default=2, help="number of groups, >= 2 (default 2)")
    p_synth.add_argument("--p-in", type=float, default=1.0, help="intra-group edge probability (default 1.0)")
    p_synth.add_argument("--p-out", type=float, default=0.02, help="inter-group edge probability (default 0.02)")
    p_synth.add_argument("--d-in", type=int, default=16, help="embedding dimension (default 16)")
    p_synth.add_argument("--noise", type=float, default=0.1, help="embedding noise amplitude (default 0.1)")
    p_synth.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p_synth.add_argument("--pos-pairs", type=int, default=400,
                         help="positive edges to sample for the pair set; 0 = all edges (default 400)")
    p_synth.add_argument("--neg-ratio", type=int, default=5, help="negatives per positive (default 5)")
    p_synth.add_argument("--neg-mode", choices=["random", "hard_plus_random"], default="random",
                         help="negative sampling mode (default random)")
    p_synth.add_argument("--out-dir", default=_default_out_dir(),
                         help=f"output directory (default $%s or ./runs)" % OUT_DIR_ENV)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train one or more seeds and write a manifest",
                             description="Train the model over --seeds and write per-seed artifacts plus a manifest.",
                             epilog=config_help_epilog(),
                             formatter_class=argparse.RawDescriptionHelpFormatter)
    p_train.add_argument("--nodes", required=True, help="nodes TSV path")
    p_train.add_argument("--edges", required=True, help="edges TSV path")
    p_train.add_argument("--splits", required=True, help="splits TSV path")
    p_train.add_argument("--config", help="flat key-value config file")
    p_train.add_argument("--seeds", type=_seeds_arg, default=[0], help="comma-separated seed list (default 0)")
    p_train.add_argument("--jobs", type=int, default=1, help="parallel seed processes (default 1)")
    p_train.add_argument("--out-dir", default=_default_out_dir(),
                         help=f"output directory (default $%s or ./runs)" % OUT_DIR_ENV)
    _add_override_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split",
                            description="Load a checkpoint and report precision/recall/F1 on a stored split.")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--nodes", required=True)
    p_eval.add_argument("--edges", required=True)
    p_eval.add_argument("--splits", required=True)
    p_eval.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p_eval.add_argument("--threshold", type=float, help="decision threshold (default: from checkpoint)")
    p_eval.add_argument("--pair-text-file", help="pair-text embedding TSV, if the model used one")
    p_eval.add_argument("--out", help="also write the metrics JSON here")
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="compare settings along one ablation axis",
                              description="Re-train per setting (shared seeds) and emit a CSV comparison table.",
                              epilog=config_help_epilog(),
                              formatter_class=argparse.RawDescriptionHelpFormatter)
    p_ablate.add_argument("--nodes", required=True)
    p_ablate.add_argument("--edges", required=True)
    p_ablate.add_argument("--splits", required=True)
    p_ablate.add_argument("--config", help="flat key-value config file")
    p_ablate.add_argument("--axis", choices=["embedding_init", "additional_features"], required=True)
    p_ablate.add_argument("--grid", required=True, help="comma-separated settings, e.g. 'file,random'")
    p_ablate.add_argument("--seeds", type=_seeds_arg, default=[0])
    p_ablate.add_argument("--out-dir", default=_default_out_dir())
    _add_override_flags(p_ablate)
    p_ablate.set_defaults(func=cmd_ablate)

    p_diag = sub.add_parser("diagnose", help="compute curriculum diagnostics from a trace",
                            description="Read a trainer trace CSV and write inversion, transition and heatmap CSVs.")
    p_diag.add_argument("--trace", required=True, help="trace CSV written by train")
    p_diag.add_argument("--window", type=int, default=None,
                        help="transition window radius (default: up to 2, shrunk to fit the trace)")
    p_diag.add_argument("--out-dir", default=_default_out_dir())
    p_diag.set_defaults(func=cmd_diagnose)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
