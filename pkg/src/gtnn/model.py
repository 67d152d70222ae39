"""Encoder-decoder link predictor over a text-attributed graph.

Encoder: t rounds of h_i <- sigmoid(W1 h_i + W2 * mean_{j in N(i)} h_j),
starting from the initial node embeddings; nodes without neighbors use a
zero vector as the neighbor mean. W1/W2 are shared across rounds, so depths
above one require d == d_in.

Decoder: h_uv = relu(We a_uv + be) over the pair feature vector, fused with
the node embeddings via a flattened outer product
fused[i * 2d + j] = h_uv[i] * concat(z_u, z_v)[j] (row-major), then
h = relu(Wlast fused + blast) and p = sigmoid(Wout h + bout).

All gradients are exact reverse-mode derivatives computed by hand; the relu
subgradient at 0 is 0 and the per-sample weights are treated as constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from gtnn.graph import Graph

P_CLIP = 1e-7

BLOCK_NAMES = ("W1", "W2", "We", "be", "Wlast", "blast", "Wout", "bout")


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or gradient turns non-finite."""


@dataclass
class HyperParams:
    d: int = 8
    d_e: int = 8
    d_h: int = 8
    t_layers: int = 1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 10

    def __post_init__(self):
        if self.t_layers < 1:
            raise ValueError("t_layers must be >= 1")
        if min(self.d, self.d_e, self.d_h) < 1:
            raise ValueError("all dims must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class GtnnParams:
    W1: np.ndarray
    W2: np.ndarray
    We: np.ndarray
    be: np.ndarray
    Wlast: np.ndarray
    blast: np.ndarray
    Wout: np.ndarray
    bout: np.ndarray  # 0-d array
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    step: int = 0

    def named_blocks(self):
        for name in BLOCK_NAMES:
            yield name, getattr(self, name)

    def copy(self) -> "GtnnParams":
        dup = GtnnParams(**{name: arr.copy() for name, arr in self.named_blocks()})
        dup.adam_m = {k: v.copy() for k, v in self.adam_m.items()}
        dup.adam_v = {k: v.copy() for k, v in self.adam_v.items()}
        dup.step = self.step
        return dup


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


RELU_BIAS_INIT = 0.01


def init_params(d_in: int, a_dim: int, hyper: HyperParams, rng: np.random.Generator) -> GtnnParams:
    """Uniform(-s, s) init with s = sqrt(6 / (fan_in + fan_out)).

    Relu-layer biases start at a small positive constant: the pair feature
    vector is nonnegative (one-hot passthrough, [0, 1] relevance scores), so
    zero biases leave a large fraction of units dead at birth with exactly
    zero gradient. The sigmoid output bias starts at zero.
    """
    d, d_e, d_h = hyper.d, hyper.d_e, hyper.d_h
    if hyper.t_layers > 1 and d != d_in:
        raise ValueError("t_layers > 1 shares W1/W2 across rounds and needs d == d_in")
    fused_dim = d_e * 2 * d
    params = GtnnParams(
        W1=_glorot(rng, (d, d_in), d_in, d),
        W2=_glorot(rng, (d, d_in), d_in, d),
        We=_glorot(rng, (d_e, a_dim), a_dim, d_e),
        be=np.full(d_e, RELU_BIAS_INIT),
        Wlast=_glorot(rng, (d_h, fused_dim), fused_dim, d_h),
        blast=np.full(d_h, RELU_BIAS_INIT),
        Wout=_glorot(rng, (d_h,), d_h, 1),
        bout=np.zeros(()),
    )
    params.adam_m = {name: np.zeros_like(arr) for name, arr in params.named_blocks()}
    params.adam_v = {name: np.zeros_like(arr) for name, arr in params.named_blocks()}
    return params


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def build_mean_adjacency(graph: Graph) -> np.ndarray:
    """Row-normalized adjacency; rows of degree-0 nodes stay zero."""
    M = np.zeros((graph.n, graph.n))
    for i, neighbors in enumerate(graph.adj):
        if neighbors:
            M[i, neighbors] = 1.0 / len(neighbors)
    return M


@dataclass
class EncodeCache:
    M: np.ndarray
    layers: list[np.ndarray]   # h^(0) .. h^(t)
    neighbor_means: list[np.ndarray]  # M @ h^(l) per round


def encode_with_adjacency(X: np.ndarray, M: np.ndarray, params: GtnnParams,
                          t_layers: int) -> tuple[np.ndarray, EncodeCache]:
    X = np.asarray(X, dtype=float)
    if X.shape[1] != params.W1.shape[1]:
        raise ValueError(f"embedding dim {X.shape[1]} does not match W1 columns {params.W1.shape[1]}")
    if t_layers > 1 and params.W1.shape[0] != params.W1.shape[1]:
        raise ValueError("t_layers > 1 requires square W1/W2 (d == d_in)")
    layers = [X]
    means = []
    H = X
    for _ in range(t_layers):
        MH = M @ H
        H = sigmoid(H @ params.W1.T + MH @ params.W2.T)
        means.append(MH)
        layers.append(H)
    return H, EncodeCache(M=M, layers=layers, neighbor_means=means)


def encode(graph: Graph, x: np.ndarray, params: GtnnParams, t_layers: int = 1) -> np.ndarray:
    """Node embeddings after t_layers rounds of neighborhood aggregation."""
    Z, _ = encode_with_adjacency(x, build_mean_adjacency(graph), params, t_layers)
    return Z


def fuse_outer(h_uv: np.ndarray, z_cat: np.ndarray) -> np.ndarray:
    """Row-major flattened outer product: out[i * len(z_cat) + j] = h_uv[i] * z_cat[j]."""
    return np.outer(h_uv, z_cat).reshape(-1)


@dataclass
class BatchTrace:
    """Vectorized forward intermediates for a batch of pairs."""

    iu: np.ndarray
    iv: np.ndarray
    a: np.ndarray       # (B, a_dim)
    z_cat: np.ndarray   # (B, 2d)
    h_uv: np.ndarray    # (B, d_e)
    fused: np.ndarray   # (B, d_e * 2d)
    hh: np.ndarray      # (B, d_h)
    logit: np.ndarray   # (B,)
    p_raw: np.ndarray
    p: np.ndarray


@dataclass
class ForwardTrace:
    """Forward intermediates for a single pair."""

    iu: int
    iv: int
    z_u: np.ndarray
    z_v: np.ndarray
    a: np.ndarray
    h_uv: np.ndarray
    fused: np.ndarray
    hh: np.ndarray
    logit: float
    p_raw: float
    p: float


def forward_pairs(iu: np.ndarray, iv: np.ndarray, Z: np.ndarray, A: np.ndarray,
                  params: GtnnParams) -> BatchTrace:
    iu = np.asarray(iu, dtype=int)
    iv = np.asarray(iv, dtype=int)
    A = np.asarray(A, dtype=float)
    z_cat = np.concatenate([Z[iu], Z[iv]], axis=1)
    h_uv = np.maximum(A @ params.We.T + params.be, 0.0)
    fused = np.einsum("bi,bj->bij", h_uv, z_cat).reshape(len(iu), -1)
    hh = np.maximum(fused @ params.Wlast.T + params.blast, 0.0)
    logit = hh @ params.Wout + float(params.bout)
    p_raw = sigmoid(logit)
    p = np.clip(p_raw, P_CLIP, 1.0 - P_CLIP)
    return BatchTrace(iu=iu, iv=iv, a=A, z_cat=z_cat, h_uv=h_uv, fused=fused,
                      hh=hh, logit=logit, p_raw=p_raw, p=p)


def forward_pair(iu: int, iv: int, Z: np.ndarray, pair_feats, params: GtnnParams) -> ForwardTrace:
    """Single-pair forward pass; pair_feats is a PairFeatures or a raw vector."""
    a = np.asarray(getattr(pair_feats, "vector", pair_feats), dtype=float)
    batch = forward_pairs(np.array([iu]), np.array([iv]), Z, a[None, :], params)
    return ForwardTrace(iu=iu, iv=iv, z_u=Z[iu].copy(), z_v=Z[iv].copy(), a=a,
                        h_uv=batch.h_uv[0], fused=batch.fused[0], hh=batch.hh[0],
                        logit=float(batch.logit[0]), p_raw=float(batch.p_raw[0]),
                        p=float(batch.p[0]))


def bce_loss(p, label):
    """Binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    p = np.clip(np.asarray(p, dtype=float), P_CLIP, 1.0 - P_CLIP)
    y = np.asarray(label, dtype=float)
    out = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(out) if out.ndim == 0 else out


def backward_pairs(trace: BatchTrace, labels: np.ndarray, weights: np.ndarray,
                   cache: EncodeCache, params: GtnnParams) -> dict[str, np.ndarray]:
    """Gradients of (1/B) sum_b weights[b] * bce(p_b, y_b) for every block.

    Weights are constants; no gradient flows through them. Samples whose
    probability hit the clamp contribute zero gradient (the clamped loss is
    locally flat in the logit).
    """
    B = len(trace.logit)
    y = np.asarray(labels, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be >= 0")

    clipped = trace.p_raw != trace.p
    dlogit = np.where(clipped, 0.0, w * (trace.p_raw - y) / B)

    grads: dict[str, np.ndarray] = {}
    grads["Wout"] = dlogit @ trace.hh
    grads["bout"] = np.asarray(dlogit.sum())

    dhh = np.outer(dlogit, params.Wout) * (trace.hh > 0)
    grads["Wlast"] = dhh.T @ trace.fused
    grads["blast"] = dhh.sum(axis=0)

    d_e = params.We.shape[0]
    two_d = trace.z_cat.shape[1]
    dfused = (dhh @ params.Wlast).reshape(B, d_e, two_d)
    dh_uv = np.einsum("bij,bj->bi", dfused, trace.z_cat) * (trace.h_uv > 0)
    dz_cat = np.einsum("bij,bi->bj", dfused, trace.h_uv)

    grads["We"] = dh_uv.T @ trace.a
    grads["be"] = dh_uv.sum(axis=0)

    d = two_d // 2
    n = cache.layers[0].shape[0]
    dZ = np.zeros((n, d))
    np.add.at(dZ, trace.iu, dz_cat[:, :d])
    np.add.at(dZ, trace.iv, dz_cat[:, d:])

    dW1 = np.zeros_like(params.W1)
    dW2 = np.zeros_like(params.W2)
    G = dZ
    for layer in range(len(cache.neighbor_means) - 1, -1, -1):
        H_out = cache.layers[layer + 1]
        H_prev = cache.layers[layer]
        delta = G * H_out * (1.0 - H_out)
        dW1 += delta.T @ H_prev
        dW2 += delta.T @ cache.neighbor_means[layer]
        if layer > 0:
            G = delta @ params.W1 + cache.M.T @ (delta @ params.W2)
    grads["W1"] = dW1
    grads["W2"] = dW2

    for name in BLOCK_NAMES:
        if not np.all(np.isfinite(grads[name])):
            raise TrainingDivergedError(f"non-finite gradient in block {name}")
    return grads


def backward_batch(batch: list[tuple[ForwardTrace, int, float]], cache: EncodeCache,
                   params: GtnnParams) -> dict[str, np.ndarray]:
    """Batch gradients from single-pair traces (stacked internally)."""
    if not batch:
        raise ValueError("batch must be nonempty")
    traces = [t for t, _, _ in batch]
    stacked = BatchTrace(
        iu=np.array([t.iu for t in traces]),
        iv=np.array([t.iv for t in traces]),
        a=np.stack([t.a for t in traces]),
        z_cat=np.stack([np.concatenate([t.z_u, t.z_v]) for t in traces]),
        h_uv=np.stack([t.h_uv for t in traces]),
        fused=np.stack([t.fused for t in traces]),
        hh=np.stack([t.hh for t in traces]),
        logit=np.array([t.logit for t in traces]),
        p_raw=np.array([t.p_raw for t in traces]),
        p=np.array([t.p for t in traces]),
    )
    labels = np.array([y for _, y, _ in batch], dtype=float)
    weights = np.array([w for _, _, w in batch], dtype=float)
    return backward_pairs(stacked, labels, weights, cache, params)


def adam_step(params: GtnnParams, grads: dict[str, np.ndarray], hyper: HyperParams) -> GtnnParams:
    """In-place Adam update with bias correction; returns params for chaining."""
    params.step += 1
    t = params.step
    b1, b2 = hyper.beta1, hyper.beta2
    for name, arr in params.named_blocks():
        g = grads[name]
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        arr -= hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
    return params


CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, params: GtnnParams, hyper: HyperParams,
                    node_ids: list[str], meta: dict | None = None) -> None:
    """Write a versioned checkpoint; arrays round-trip bit-exactly."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "hyper": hyper.__dict__,
        "node_ids": node_ids,
        "step": params.step,
        "meta": meta or {},
    }
    arrays = {name: arr for name, arr in params.named_blocks()}
    arrays.update({f"m_{k}": v for k, v in params.adam_m.items()})
    arrays.update({f"v_{k}": v for k, v in params.adam_v.items()})
    np.savez(path, _meta=np.frombuffer(json.dumps(payload, sort_keys=True).encode("utf-8"), dtype=np.uint8),
             **arrays)


def load_checkpoint(path: str) -> tuple[GtnnParams, HyperParams, list[str], dict]:
    with np.load(path, allow_pickle=False) as data:
        payload = json.loads(bytes(data["_meta"]).decode("utf-8"))
        if payload["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload['version']}")
        params = GtnnParams(**{name: data[name].copy() for name in BLOCK_NAMES})
        params.adam_m = {name: data[f"m_{name}"].copy() for name in BLOCK_NAMES}
        params.adam_v = {name: data[f"v_{name}"].copy() for name in BLOCK_NAMES}
        params.step = int(payload["step"])
        hyper = HyperParams(**payload["hyper"])
    return params, hyper, list(payload["node_ids"]), payload["meta"]
