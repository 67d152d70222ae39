"""Training loop: batching, curriculum weighting, Adam, early stopping, metrics.

One run is a single logical thread of control. Per epoch the train pairs are
reshuffled from the run seed; per batch the flow is forward, per-sample BCE,
curriculum weighting, weighted backward, Adam. Validation F1 drives early
stopping and the best-validation parameters are restored before the test
evaluation. Identical config and seed reproduce every artifact byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from gtnn.curriculum import CurriculumConfig, CurriculumState
from gtnn.graph import Graph, PairSample, SplitSet
from gtnn.model import (GtnnParams, HyperParams, TrainingDivergedError, adam_step,
                        backward_pairs, bce_loss, build_mean_adjacency,
                        encode_with_adjacency, forward_pairs, init_params)
from gtnn.rng import rng_for
from gtnn.textfeat import CorpusStats, FeatureToggles, PairFeaturizer, build_corpus
from gtnn.trace import TraceRow

SAMPLE_ID_SEP = "|"


def sample_id(u: str, v: str) -> str:
    return f"{u}{SAMPLE_ID_SEP}{v}" if u <= v else f"{v}{SAMPLE_ID_SEP}{u}"


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "Metrics":
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn, tn=tn)

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def metrics_from_predictions(y_true: np.ndarray, p: np.ndarray, threshold: float) -> Metrics:
    y_true = np.asarray(y_true).astype(int)
    pred = (np.asarray(p) >= threshold).astype(int)
    tp = int(np.sum((pred == 1) & (y_true == 1)))
    fp = int(np.sum((pred == 1) & (y_true == 0)))
    fn = int(np.sum((pred == 0) & (y_true == 1)))
    tn = int(np.sum((pred == 0) & (y_true == 0)))
    return Metrics.from_counts(tp, fp, fn, tn)


@dataclass
class EpochRecord:
    epoch: int
    mean_train_loss: float
    val: Metrics
    difficulty: dict[str, str] = field(default_factory=dict)

    @property
    def n_easy(self) -> int:
        return sum(1 for lab in self.difficulty.values() if lab == "easy")

    @property
    def n_hard(self) -> int:
        return sum(1 for lab in self.difficulty.values() if lab == "hard")


@dataclass
class TrainConfig:
    hyper: HyperParams = field(default_factory=HyperParams)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    features: FeatureToggles = field(default_factory=FeatureToggles)
    seed: int = 0
    embedding_init: str = "file"  # file | random
    eval_threshold: float = 0.5
    random_d_in: int = 16
    pair_text: dict | None = None  # (u, v) -> vector, when features.pair_text is on

    def __post_init__(self):
        if self.embedding_init not in ("file", "random"):
            raise ValueError(f"embedding_init must be 'file' or 'random', got {self.embedding_init!r}")
        if not 0.0 < self.eval_threshold < 1.0:
            raise ValueError("eval_threshold must be in (0, 1)")

    def snapshot(self) -> dict:
        return {
            "hyper": dict(self.hyper.__dict__),
            "curriculum": dict(self.curriculum.__dict__),
            "features": dict(self.features.__dict__),
            "seed": self.seed,
            "embedding_init": self.embedding_init,
            "eval_threshold": self.eval_threshold,
            "random_d_in": self.random_d_in,
        }


@dataclass
class _SplitArrays:
    iu: np.ndarray
    iv: np.ndarray
    y: np.ndarray
    A: np.ndarray
    ids: list[str]


@dataclass
class TrainResult:
    params: GtnnParams
    records: list[EpochRecord]
    test: Metrics
    best_epoch: int
    stopped_early: bool
    trace: list[TraceRow]
    featurizer_meta: dict
    node_ids: list[str]

    def metrics_payload(self, cfg: TrainConfig) -> dict:
        return {
            "config": cfg.snapshot(),
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "epochs": [{
                "epoch": r.epoch,
                "mean_train_loss": r.mean_train_loss,
                "val": r.val.to_dict(),
                "n_easy": r.n_easy,
                "n_hard": r.n_hard,
            } for r in self.records],
            "test": self.test.to_dict(),
        }

    def metrics_json(self, cfg: TrainConfig) -> str:
        return json.dumps(self.metrics_payload(cfg), sort_keys=True, indent=1)


def resolve_embeddings(graph: Graph, cfg: TrainConfig) -> np.ndarray:
    if cfg.embedding_init == "file":
        return graph.embedding_matrix()
    d_in = graph.d_in if graph.d_in is not None else cfg.random_d_in
    rng = rng_for(cfg.seed, "embed")
    return rng.uniform(-0.5, 0.5, size=(graph.n, d_in))


def build_featurizer(graph: Graph, X: np.ndarray, cfg: TrainConfig,
                     splits: SplitSet) -> PairFeaturizer:
    stats: CorpusStats | None = None
    if cfg.features.relevance:
        stats = build_corpus(graph)
    featurizer = PairFeaturizer(graph, X, cfg.features, stats, cfg.pair_text)
    pairs = [(s.u, s.v) for s in splits.all_samples()]
    featurizer.fit_normalization(pairs)
    return featurizer


def _split_arrays(samples: list[PairSample], graph: Graph,
                  featurizer: PairFeaturizer) -> _SplitArrays:
    iu = np.array([graph.index[s.u] for s in samples], dtype=int)
    iv = np.array([graph.index[s.v] for s in samples], dtype=int)
    y = np.array([s.label for s in samples], dtype=float)
    A = featurizer.feature_matrix([(s.u, s.v) for s in samples])
    ids = [sample_id(s.u, s.v) for s in samples]
    return _SplitArrays(iu=iu, iv=iv, y=y, A=A, ids=ids)


def _predict(arr: _SplitArrays, X: np.ndarray, M: np.ndarray, params: GtnnParams,
             t_layers: int) -> np.ndarray:
    Z, _ = encode_with_adjacency(X, M, params, t_layers)
    return forward_pairs(arr.iu, arr.iv, Z, arr.A, params).p


def evaluate(params: GtnnParams, pairs: list[PairSample], graph: Graph,
             featurizer: PairFeaturizer, X: np.ndarray, threshold: float = 0.5,
             t_layers: int = 1, M: np.ndarray | None = None) -> Metrics:
    """Precision/recall/F1 of thresholded edge probabilities over `pairs`."""
    if not pairs:
        raise ValueError("pairs must be nonempty")
    if M is None:
        M = build_mean_adjacency(graph)
    arr = _split_arrays(pairs, graph, featurizer)
    p = _predict(arr, X, M, params, t_layers)
    return metrics_from_predictions(arr.y, p, threshold)


def train(graph: Graph, splits: SplitSet, cfg: TrainConfig,
          trace_sink=None) -> TrainResult:
    """Run the full training loop and return params, records, and test metrics.

    trace_sink, when given, receives one TraceRow per (epoch, train sample);
    otherwise rows accumulate on the result. Raises TrainingDivergedError
    with epoch/batch context if the loss turns non-finite.
    """
    hyper = cfg.hyper
    X = resolve_embeddings(graph, cfg)
    featurizer = build_featurizer(graph, X, cfg, splits)
    M = build_mean_adjacency(graph)

    tr = _split_arrays(splits.train, graph, featurizer)
    va = _split_arrays(splits.valid, graph, featurizer)
    te = _split_arrays(splits.test, graph, featurizer)

    params = init_params(X.shape[1], featurizer.dim, hyper, rng_for(cfg.seed, "init"))
    state = CurriculumState(cfg.curriculum)

    collected: list[TraceRow] = []
    sink = trace_sink if trace_sink is not None else collected.append

    n_train = len(splits.train)
    records: list[EpochRecord] = []
    best_f1 = -1.0
    best_epoch = -1
    best_params = params.copy()
    stopped_early = False

    for epoch in range(hyper.max_epochs):
        perm = rng_for(cfg.seed, "shuffle", epoch).permutation(n_train)
        epoch_loss_sum = 0.0
        difficulty: dict[str, str] = {}
        for start in range(0, n_train, hyper.batch_size):
            idx = perm[start:start + hyper.batch_size]
            Z, cache = encode_with_adjacency(X, M, params, hyper.t_layers)
            btr = forward_pairs(tr.iu[idx], tr.iv[idx], Z, tr.A[idx], params)
            losses = bce_loss(btr.p, tr.y[idx])
            if not np.all(np.isfinite(losses)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}")
            ids = [tr.ids[i] for i in idx]
            sigma, labels, deltas = state.weight_batch(ids, losses, epoch)
            grads = backward_pairs(btr, tr.y[idx], sigma, cache, params)
            adam_step(params, grads, hyper)

            epoch_loss_sum += float(losses.sum())
            for j, sid in enumerate(ids):
                difficulty[sid] = labels[j].label
                sink(TraceRow(epoch=epoch, sample_id=sid, loss=float(losses[j]),
                              delta=float(deltas[j]), sigma=float(sigma[j]),
                              label=labels[j].label))

        val_metrics = metrics_from_predictions(
            va.y, _predict(va, X, M, params, hyper.t_layers), cfg.eval_threshold)
        records.append(EpochRecord(epoch=epoch, mean_train_loss=epoch_loss_sum / n_train,
                                   val=val_metrics, difficulty=difficulty))

        if val_metrics.f1 > best_f1:
            best_f1 = val_metrics.f1
            best_epoch = epoch
            best_params = params.copy()
        elif epoch - best_epoch >= hyper.patience:
            stopped_early = True
            break

    final_params = best_params if best_epoch >= 0 else params
    test_metrics = metrics_from_predictions(
        te.y, _predict(te, X, M, final_params, hyper.t_layers), cfg.eval_threshold)

    return TrainResult(params=final_params, records=records, test=test_metrics,
                       best_epoch=best_epoch, stopped_early=stopped_early,
                       trace=collected, featurizer_meta=featurizer.meta(),
                       node_ids=list(graph.ids))


ABLATION_AXES = ("embedding_init", "additional_features")


def ablate(graph: Graph, splits: SplitSet, base_cfg: TrainConfig, axis: str,
           grid: list[str]) -> list[tuple[str, Metrics]]:
    """Re-train per grid setting with a shared seed and collect test metrics.

    axis 'embedding_init' follows the embedding ablation protocol: relevance
    and pair-text features are switched off so only the initialization
    changes. axis 'additional_features' toggles relevance/pair-text on or off
    while keeping the configured initialization.
    """
    if axis not in ABLATION_AXES:
        raise ValueError(f"unknown ablation axis {axis!r}")
    if not grid:
        raise ValueError("grid must be nonempty")

    rows: list[tuple[str, Metrics]] = []
    for setting in grid:
        cfg = TrainConfig(
            hyper=HyperParams(**base_cfg.hyper.__dict__),
            curriculum=CurriculumConfig(**base_cfg.curriculum.__dict__),
            features=FeatureToggles(**base_cfg.features.__dict__),
            seed=base_cfg.seed,
            embedding_init=base_cfg.embedding_init,
            eval_threshold=base_cfg.eval_threshold,
            random_d_in=base_cfg.random_d_in,
            pair_text=base_cfg.pair_text,
        )
        if axis == "embedding_init":
            if setting not in ("file", "random"):
                raise ValueError(f"embedding_init setting must be 'file' or 'random', got {setting!r}")
            cfg.embedding_init = setting
            cfg.features.relevance = False
            cfg.features.pair_text = False
            cfg.features.passthrough = True
        else:
            if setting not in ("on", "off"):
                raise ValueError(f"additional_features setting must be 'on' or 'off', got {setting!r}")
            enabled = setting == "on"
            cfg.features.relevance = enabled
            cfg.features.pair_text = enabled and bool(base_cfg.pair_text)
            cfg.features.passthrough = True
        result = train(graph, splits, cfg)
        rows.append((setting, result.test))
    return rows
