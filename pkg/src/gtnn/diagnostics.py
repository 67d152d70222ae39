"""Curriculum-dynamics diagnostics over a completed training trace.

An inversion is a sample's easy/hard label flipping between consecutive
epochs. This module computes, purely from the persisted trace:

* the per-epoch inversion fraction and its trapezoidal AUC,
* average normalized-loss windows around the four transition kinds
  (easy-to-easy, easy-to-hard, hard-to-easy, hard-to-hard),
* epoch-by-epoch inversion heatmaps conditioned on the loss trend, plus the
  consecutive-epoch series and its AUC.

Losses in the transition windows are min-max normalized per sample over the
whole trace (constant-loss samples normalize to 0). Heatmap entry (i, j) for
the easy-to-hard direction is the fraction of samples that were easy with a
rising trend (delta > 0) at epoch i among which the label is hard at epoch
j > i; the hard-to-easy direction mirrors it with falling trends. An empty
condition set yields fraction 0.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from gtnn.trace import TraceRow, read_trace

TRANSITION_KINDS = ("E2E", "E2H", "H2E", "H2H")
HEATMAP_DIRECTIONS = ("E2H_rising", "H2E_falling")


@dataclass
class DifficultyTrace:
    """Rectangular (epoch, sample) matrices extracted from trace rows."""

    sample_ids: list[str]
    labels: np.ndarray  # (E, S), 0 = easy, 1 = hard
    losses: np.ndarray  # (E, S)
    deltas: np.ndarray  # (E, S)
    sigmas: np.ndarray  # (E, S)

    @property
    def n_epochs(self) -> int:
        return self.labels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.labels.shape[1]


def trace_from_rows(rows: list[TraceRow]) -> DifficultyTrace:
    """Assemble matrices; raises if any (epoch, sample) cell is missing or doubled."""
    if not rows:
        raise ValueError("trace is empty")
    epochs = sorted({r.epoch for r in rows})
    if epochs != list(range(len(epochs))):
        raise ValueError(f"trace epochs are not contiguous from 0: {epochs[:10]}")
    sample_ids = sorted({r.sample_id for r in rows})
    sidx = {s: i for i, s in enumerate(sample_ids)}
    E, S = len(epochs), len(sample_ids)

    labels = np.full((E, S), -1, dtype=np.int8)
    losses = np.full((E, S), np.nan)
    deltas = np.full((E, S), np.nan)
    sigmas = np.full((E, S), np.nan)
    for r in rows:
        e, s = r.epoch, sidx[r.sample_id]
        if labels[e, s] != -1:
            raise ValueError(f"duplicate trace cell for epoch {e}, sample {r.sample_id!r}")
        labels[e, s] = 1 if r.label == "hard" else 0
        losses[e, s] = r.loss
        deltas[e, s] = r.delta
        sigmas[e, s] = r.sigma
    if np.any(labels == -1):
        e, s = np.argwhere(labels == -1)[0]
        raise ValueError(f"trace is not rectangular: epoch {e}, sample {sample_ids[s]!r} missing")
    return DifficultyTrace(sample_ids=sample_ids, labels=labels, losses=losses,
                           deltas=deltas, sigmas=sigmas)


def load_trace(path: str) -> DifficultyTrace:
    return trace_from_rows(read_trace(path))


def inversion_fraction(trace: DifficultyTrace) -> np.ndarray:
    """Fraction of samples whose label flips per consecutive epoch pair.

    Entry e covers the pair (e, e+1); length is n_epochs - 1.
    """
    if trace.n_epochs < 2:
        raise ValueError("need at least 2 epochs for inversion analysis")
    flips = trace.labels[1:] != trace.labels[:-1]
    return flips.mean(axis=1)


def curve_auc(series) -> float:
    """Trapezoidal integral of a per-epoch series over its index."""
    values = np.asarray(series, dtype=float)
    if values.size < 2:
        raise ValueError("need at least 2 points")
    return float(0.5 * (values[1:] + values[:-1]).sum())


def normalized_losses(trace: DifficultyTrace) -> np.ndarray:
    """Per-sample min-max normalization of losses over the trace; constant -> 0."""
    lo = trace.losses.min(axis=0)
    hi = trace.losses.max(axis=0)
    span = hi - lo
    out = np.zeros_like(trace.losses)
    nz = span > 0
    out[:, nz] = (trace.losses[:, nz] - lo[nz]) / span[nz]
    return out


@dataclass
class TransitionProfile:
    kind: str
    offsets: np.ndarray       # -k .. +k
    mean_loss: np.ndarray     # NaN-filled when no events
    n_events: int


def transition_profiles(trace: DifficultyTrace, k: int) -> dict[str, TransitionProfile]:
    """Average normalized-loss windows of radius k around each transition kind.

    A transition at epoch e compares labels at e-1 and e; events only count
    where the full window [e-k, e+k] fits inside the trace.
    """
    if k < 1:
        raise ValueError("window radius must be >= 1")
    E = trace.n_epochs
    if E < 2 * k + 1:
        raise ValueError(f"trace spans {E} epochs; need >= {2 * k + 1} for window radius {k}")
    norm = normalized_losses(trace)
    offsets = np.arange(-k, k + 1)
    sums = {kind: np.zeros(2 * k + 1) for kind in TRANSITION_KINDS}
    counts = dict.fromkeys(TRANSITION_KINDS, 0)
    kind_code = {(0, 0): "E2E", (0, 1): "E2H", (1, 0): "H2E", (1, 1): "H2H"}
    for e in range(max(1, k), E - k):
        prev = trace.labels[e - 1]
        cur = trace.labels[e]
        window = norm[e - k:e + k + 1]  # (2k+1, S)
        for s in range(trace.n_samples):
            kind = kind_code[(int(prev[s]), int(cur[s]))]
            sums[kind] += window[:, s]
            counts[kind] += 1
    out = {}
    for kind in TRANSITION_KINDS:
        n = counts[kind]
        mean = sums[kind] / n if n > 0 else np.full(2 * k + 1, np.nan)
        out[kind] = TransitionProfile(kind=kind, offsets=offsets, mean_loss=mean, n_events=n)
    return out


@dataclass
class HeatmapResult:
    direction: str
    matrix: np.ndarray        # (E, E); NaN at j <= i
    consecutive: np.ndarray   # entry i = matrix[i, i+1]
    auc: float


def inversion_heatmap(trace: DifficultyTrace, direction: str) -> HeatmapResult:
    """Trend-conditioned inversion fractions for every epoch pair i < j."""
    if direction not in HEATMAP_DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    E = trace.n_epochs
    if E < 2:
        raise ValueError("need at least 2 epochs")
    if direction == "E2H_rising":
        cond = (trace.labels == 0) & (trace.deltas > 0)
        target_hard = True
    else:
        cond = (trace.labels == 1) & (trace.deltas < 0)
        target_hard = False
    matrix = np.full((E, E), np.nan)
    for i in range(E):
        base = cond[i]
        denom = int(base.sum())
        for j in range(i + 1, E):
            if denom == 0:
                matrix[i, j] = 0.0
                continue
            flipped = trace.labels[j] == (1 if target_hard else 0)
            matrix[i, j] = float((base & flipped).sum()) / denom
    consecutive = np.array([matrix[i, i + 1] for i in range(E - 1)])
    return HeatmapResult(direction=direction, matrix=matrix, consecutive=consecutive,
                         auc=curve_auc(consecutive) if E >= 3 else 0.0)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_diagnostics(trace: DifficultyTrace, out_dir: str,
                      window: int | None = 2) -> dict[str, str]:
    """Emit every diagnostic CSV into out_dir; returns name -> path.

    window=None picks the largest radius up to 2 that fits the trace and
    skips the transition files entirely when not even radius 1 fits.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths: dict[str, str] = {}

    frac = inversion_fraction(trace)
    path = os.path.join(out_dir, "inversion_fraction.csv")
    _write_csv(path, ["epoch", "fraction"],
               [[e + 1, _fmt(v)] for e, v in enumerate(frac)])
    paths["inversion_fraction"] = path

    if window is None:
        window = min(2, (trace.n_epochs - 1) // 2)
    if window >= 1:
        profiles = transition_profiles(trace, window)
        for kind, prof in profiles.items():
            path = os.path.join(out_dir, f"transition_{kind}.csv")
            _write_csv(path, ["offset", "mean_normalized_loss", "n_events"],
                       [[int(o), "nan" if np.isnan(m) else _fmt(m), prof.n_events]
                        for o, m in zip(prof.offsets, prof.mean_loss)])
            paths[f"transition_{kind}"] = path

    aucs: list[list] = []
    raw_auc = curve_auc(frac) if len(frac) >= 2 else 0.0
    aucs.append(["inversion_fraction_auc_raw", _fmt(raw_auc)])
    aucs.append(["inversion_fraction_auc_normalized",
                 _fmt(raw_auc / (len(frac) - 1) if len(frac) >= 2 else 0.0)])

    for direction in HEATMAP_DIRECTIONS:
        result = inversion_heatmap(trace, direction)
        path = os.path.join(out_dir, f"heatmap_{direction}.csv")
        rows = [[i, j, _fmt(result.matrix[i, j])]
                for i in range(trace.n_epochs) for j in range(i + 1, trace.n_epochs)]
        _write_csv(path, ["epoch_i", "epoch_j", "fraction"], rows)
        paths[f"heatmap_{direction}"] = path
        aucs.append([f"{direction}_consecutive_auc", _fmt(result.auc)])

    path = os.path.join(out_dir, "auc_summary.csv")
    _write_csv(path, ["name", "value"], aucs)
    paths["auc_summary"] = path
    return paths
