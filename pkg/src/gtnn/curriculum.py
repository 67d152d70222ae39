"""Confidence-aware sample weighting with loss-trend adjustment.

Each training sample gets a closed-form confidence weight

    sigma* = exp(-W(0.5 * max(-2/e, beta))),   beta = (l - (tau - alpha * delta)) / lam

where l is the sample's instantaneous loss, tau an EMA difficulty threshold
over batch losses, delta in [-1, 1] the sample's recent loss trend, and W the
principal Lambert W branch. alpha = 0 recovers plain confidence weighting
(mode "sl"); mode "none" leaves all weights at 1.

Trend semantics: the current loss is pushed into the sample's window first,
then delta is the normalized sum of consecutive differences over the window
contents (up to k entries). Fewer than two entries, or a constant window,
give delta = 0. The tie l == tau - alpha*delta classifies as easy.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

INV_E = 1.0 / math.e
TWO_OVER_E = 2.0 / math.e

_HALLEY_TOL = 1e-14
_HALLEY_MAX_ITER = 50


def lambert_w0(x):
    """Principal branch W0 for scalars or arrays, x >= -1/e.

    Piecewise initial guess (branch-point series near -1/e, log-based above)
    refined by Halley iteration until the residual w*e^w - x drops below
    1e-14 * max(1, |x|). Inputs within 1e-12 below -1/e are clamped to the
    branch point; anything lower raises ValueError.
    """
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    z = np.atleast_1d(arr).astype(float).copy()
    if np.any(z < -INV_E - 1e-12):
        bad = float(np.min(z))
        raise ValueError(f"lambert_w0 domain error: {bad} < -1/e")
    z = np.maximum(z, -INV_E)

    w = np.empty_like(z)
    near = z < -0.25
    if np.any(near):
        p = np.sqrt(2.0 * (math.e * z[near] + 1.0))
        w[near] = -1.0 + p - p * p / 3.0 + (11.0 / 72.0) * p ** 3
    mid = (~near) & (z < math.e)
    if np.any(mid):
        w[mid] = np.log1p(z[mid])
    high = z >= math.e
    if np.any(high):
        lz = np.log(z[high])
        w[high] = lz - np.log(lz)

    tol = _HALLEY_TOL * np.maximum(1.0, np.abs(z))
    active = np.arange(z.size)
    for _ in range(_HALLEY_MAX_ITER):
        wa = w[active]
        ew = np.exp(wa)
        f = wa * ew - z[active]
        done = np.abs(f) <= tol[active]
        if np.all(done):
            active = active[:0]
            break
        keep = ~done
        active = active[keep]
        wa, ew, f = wa[keep], ew[keep], f[keep]
        wp1 = wa + 1.0
        denom = ew * wp1 - (wa + 2.0) * f / (2.0 * wp1)
        w[active] = wa - f / denom
    out = np.where(z == -INV_E, -1.0, w)
    return float(out[0]) if scalar else out.reshape(arr.shape)


@dataclass
class LossHistory:
    """Ring buffer of the last k losses for one sample, with iteration tags."""

    capacity: int
    losses: deque = field(default_factory=deque)
    iterations: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("window capacity must be >= 1")
        self.losses = deque(self.losses, maxlen=self.capacity)
        self.iterations = deque(self.iterations, maxlen=self.capacity)

    def push(self, loss: float, iteration: int) -> None:
        self.losses.append(float(loss))
        self.iterations.append(int(iteration))


def trend_delta(hist) -> float:
    """Normalized sum of consecutive loss differences over the window, in [-1, 1].

    Accepts a LossHistory or any chronological sequence of losses. Returns 0
    for windows with fewer than two entries or no movement.
    """
    values = list(hist.losses) if isinstance(hist, LossHistory) else list(hist)
    if len(values) < 2:
        return 0.0
    diffs = [b - a for a, b in zip(values, values[1:])]
    denom = sum(abs(d) for d in diffs)
    if denom == 0.0:
        return 0.0
    return sum(diffs) / denom


def sigma_star(l, tau, delta, alpha, lam):
    """Closed-form confidence weight; range (0, e], exactly 1 at l == tau - alpha*delta."""
    if np.any(np.asarray(lam) <= 0):
        raise ValueError("lam must be > 0")
    beta = (np.asarray(l, dtype=float) - (tau - alpha * np.asarray(delta, dtype=float))) / lam
    clipped = np.maximum(-TWO_OVER_E, beta)
    out = np.exp(-lambert_w0(0.5 * clipped))
    return float(out) if np.ndim(beta) == 0 else out


@dataclass
class CurriculumConfig:
    mode: str = "trend_sl"  # none | sl | trend_sl
    alpha: float = 0.3
    lam: float = 1.0
    k: int = 5
    ema_gamma: float = 0.9

    def __post_init__(self):
        if self.mode not in ("none", "sl", "trend_sl"):
            raise ValueError(f"unknown curriculum mode {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 < self.ema_gamma < 1.0:
            raise ValueError("ema_gamma must be in (0, 1)")


@dataclass
class DifficultyLabel:
    label: str  # easy | hard
    threshold: float


class CurriculumState:
    """Mutable per-run curriculum bookkeeping: tau EMA and loss histories.

    weight_batch mutates shared state and must be called from a single
    thread; the pure helpers (sigma_star, trend_delta, lambert_w0) are
    reentrant.
    """

    def __init__(self, config: CurriculumConfig):
        self.config = config
        self.tau: float | None = None
        self.histories: dict[str, LossHistory] = {}
        self.last_sigma: dict[str, float] = {}
        self.last_delta: dict[str, float] = {}
        self.last_difficulty: dict[str, DifficultyLabel] = {}

    def update_tau(self, batch_losses) -> float:
        """EMA update from the batch mean; the first call seeds tau directly."""
        losses = np.asarray(batch_losses, dtype=float)
        if losses.size == 0:
            raise ValueError("batch_losses must be nonempty")
        if not np.all(np.isfinite(losses)):
            raise ValueError("batch_losses must be finite")
        mean = float(losses.mean())
        if self.tau is None:
            self.tau = mean
        else:
            g = self.config.ema_gamma
            self.tau = g * self.tau + (1.0 - g) * mean
        return self.tau

    def weight_batch(self, sample_ids: list[str], losses, iteration: int):
        """Push losses, refresh tau, and return (sigma, labels, deltas).

        tau updates from this batch before the weights are computed. Unknown
        sample ids start a fresh history (delta = 0 on first sight). In mode
        "none" sigma is identically 1 and difficulty compares l against tau
        alone; "sl" behaves as alpha = 0.
        """
        losses = np.asarray(losses, dtype=float)
        if losses.shape[0] != len(sample_ids):
            raise ValueError("sample_ids and losses length mismatch")
        if not np.all(np.isfinite(losses)):
            raise ValueError("losses must be finite")

        tau = self.update_tau(losses)
        cfg = self.config
        deltas = np.empty(len(sample_ids))
        for i, sid in enumerate(sample_ids):
            hist = self.histories.get(sid)
            if hist is None:
                hist = LossHistory(capacity=cfg.k)
                self.histories[sid] = hist
            hist.push(float(losses[i]), iteration)
            deltas[i] = trend_delta(hist)

        alpha_eff = cfg.alpha if cfg.mode == "trend_sl" else 0.0
        if cfg.mode == "none":
            sigma = np.ones_like(losses)
        else:
            sigma = sigma_star(losses, tau, deltas, alpha_eff, cfg.lam)

        thresholds = tau - alpha_eff * deltas
        labels = [DifficultyLabel("easy" if losses[i] <= thresholds[i] else "hard",
                                  float(thresholds[i]))
                  for i in range(len(sample_ids))]

        for i, sid in enumerate(sample_ids):
            self.last_sigma[sid] = float(sigma[i])
            self.last_delta[sid] = float(deltas[i])
            self.last_difficulty[sid] = labels[i]
        return sigma, labels, deltas
