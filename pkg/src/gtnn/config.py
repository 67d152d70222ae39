"""Flat key-value run configuration.

Config files hold one ``key = value`` per line (``#`` comments allowed).
CLI flags override file values, which override the defaults below.
"""

from __future__ import annotations

from gtnn.curriculum import CurriculumConfig
from gtnn.model import HyperParams
from gtnn.textfeat import FeatureToggles
from gtnn.trainer import TrainConfig

CONFIG_KEYS: dict[str, str] = {
    "curriculum.mode": "none | sl | trend_sl (default trend_sl)",
    "curriculum.alpha": "trend weight in [0, 1], grid step 0.1 (default 0.3)",
    "curriculum.lambda": "regularization > 0, grid {0.1, 0.5, 1.0, 5, 10, 100} (default 1.0)",
    "curriculum.k": "loss window size >= 1, grid [1, 10] (default 5)",
    "curriculum.ema_gamma": "EMA factor for the difficulty threshold, in (0, 1) (default 0.9)",
    "features.relevance": "true/false: BM25 + TF-IDF pair scores (default true)",
    "features.passthrough": "true/false: raw initial embeddings of the pair (default true)",
    "features.pair_text": "true/false: pair-text embeddings from data.pair_text_path (default false)",
    "model.d": "node embedding dim (default 8)",
    "model.d_e": "pair feature hidden dim (default 8)",
    "model.d_h": "decoder hidden dim (default 8)",
    "model.t_layers": "encoder rounds; above 1 requires d == input dim (default 1)",
    "optim.lr": "Adam learning rate (default 0.001)",
    "optim.beta1": "Adam beta1 (default 0.9)",
    "optim.beta2": "Adam beta2 (default 0.999)",
    "optim.eps": "Adam epsilon (default 1e-8)",
    "train.batch_size": "mini-batch size (default 128)",
    "train.max_epochs": "epoch cap (default 100)",
    "train.patience": "epochs without validation-F1 improvement before stopping (default 10)",
    "train.eval_threshold": "decision threshold in (0, 1) (default 0.5)",
    "train.embedding_init": "file | random (default file)",
    "train.random_d_in": "embedding dim when embedding_init=random and the nodes file has none (default 16)",
    "data.pair_text_path": "optional TSV of pair-text embeddings (default unset)",
}

_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False, "on": True, "off": False}


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value.strip()
    return values


def _coerce_bool(key: str, value: str) -> bool:
    flag = _BOOL_VALUES.get(str(value).lower())
    if flag is None:
        raise ValueError(f"config key {key}: expected a boolean, got {value!r}")
    return flag


def build_train_config(values: dict[str, str], seed: int = 0) -> TrainConfig:
    """Materialize a TrainConfig from flat key-value strings."""

    def get(key: str, cast, default):
        if key not in values:
            return default
        if cast is bool:
            return _coerce_bool(key, values[key])
        return cast(values[key])

    hyper = HyperParams(
        d=get("model.d", int, 8),
        d_e=get("model.d_e", int, 8),
        d_h=get("model.d_h", int, 8),
        t_layers=get("model.t_layers", int, 1),
        lr=get("optim.lr", float, 1e-3),
        beta1=get("optim.beta1", float, 0.9),
        beta2=get("optim.beta2", float, 0.999),
        eps=get("optim.eps", float, 1e-8),
        batch_size=get("train.batch_size", int, 128),
        max_epochs=get("train.max_epochs", int, 100),
        patience=get("train.patience", int, 10),
    )
    curriculum = CurriculumConfig(
        mode=get("curriculum.mode", str, "trend_sl"),
        alpha=get("curriculum.alpha", float, 0.3),
        lam=get("curriculum.lambda", float, 1.0),
        k=get("curriculum.k", int, 5),
        ema_gamma=get("curriculum.ema_gamma", float, 0.9),
    )
    features = FeatureToggles(
        relevance=get("features.relevance", bool, True),
        passthrough=get("features.passthrough", bool, True),
        pair_text=get("features.pair_text", bool, False),
    )
    return TrainConfig(
        hyper=hyper,
        curriculum=curriculum,
        features=features,
        seed=seed,
        embedding_init=get("train.embedding_init", str, "file"),
        eval_threshold=get("train.eval_threshold", float, 0.5),
        random_d_in=get("train.random_d_in", int, 16),
    )


def config_help_epilog() -> str:
    lines = ["config keys (file 'key = value' lines; flags override the file):"]
    lines += [f"  {key:<28} {doc}" for key, doc in CONFIG_KEYS.items()]
    return "\n".join(lines)
