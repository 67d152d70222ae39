#!/usr/bin/env python3
"""Compare curriculum modes on the synthetic dataset.

Trains the model under no curriculum, plain confidence weighting, and
trend-aware weighting over several seeds, then reports mean test metrics and
the inversion-fraction AUC of each curriculum mode (computed over a shared
fixed-epoch run so the curves are comparable).
"""

import argparse

import numpy as np

from gtnn.curriculum import CurriculumConfig
from gtnn.diagnostics import curve_auc, inversion_fraction, trace_from_rows
from gtnn.graph import PairSample, sample_negatives, sample_positive_pairs, split, synth_graph
from gtnn.model import HyperParams
from gtnn.trainer import TrainConfig, train

MODES = ("none", "sl", "trend_sl")


def build_dataset(seed: int):
    graph = synth_graph(200, 2, 1.0, 0.02, 16, 0.1, seed=seed)
    positives = sample_positive_pairs(graph, 400, seed=seed)
    negatives = sample_negatives(graph, positives, 5, "random", seed=seed)
    samples = [PairSample(u=u, v=v, label=1, source="positive") for u, v in positives]
    samples += negatives
    return graph, split(samples, (0.8, 0.1, 0.1), seed=seed)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5, help="number of training seeds")
    parser.add_argument("--data-seed", type=int, default=7)
    parser.add_argument("--alpha", type=float, default=0.3)
    parser.add_argument("--lambda", dest="lam", type=float, default=1.0)
    parser.add_argument("--k", type=int, default=5)
    parser.add_argument("--auc-epochs", type=int, default=12,
                        help="fixed epochs for the inversion-AUC comparison")
    args = parser.parse_args()

    graph, splits = build_dataset(args.data_seed)
    print(f"dataset: {graph.n} nodes, {graph.n_edges} edges, "
          f"{len(splits.all_samples())} pairs (train {len(splits.train)})")

    print("\ntest F1 over seeds:")
    for mode in MODES:
        f1s = []
        for seed in range(args.seeds):
            cfg = TrainConfig(
                hyper=HyperParams(max_epochs=100, patience=30),
                curriculum=CurriculumConfig(mode=mode, alpha=args.alpha, lam=args.lam, k=args.k),
                seed=seed,
            )
            f1s.append(train(graph, splits, cfg).test.f1)
        print(f"  {mode:>9}: {np.mean(f1s):.4f} +/- {np.std(f1s):.4f}")

    print(f"\ninversion-fraction AUC over {args.auc_epochs} fixed epochs (seed 0):")
    for mode in ("sl", "trend_sl"):
        cfg = TrainConfig(
            hyper=HyperParams(max_epochs=args.auc_epochs, patience=args.auc_epochs),
            curriculum=CurriculumConfig(mode=mode, alpha=args.alpha, lam=args.lam, k=args.k),
            seed=0,
        )
        result = train(graph, splits, cfg)
        frac = inversion_fraction(trace_from_rows(result.trace))
        print(f"  {mode:>9}: raw {curve_auc(frac):.4f}, "
              f"normalized {curve_auc(frac) / (len(frac) - 1):.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
