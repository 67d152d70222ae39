"""Undirected text-attributed graph: ingestion, sampling, splitting, synthesis.

File formats (UTF-8, LF, tab-separated, ``#`` starts a comment line):

* nodes file: ``id<TAB>group<TAB>description<TAB>embedding`` where ``group``
  and ``description`` may be empty and ``embedding`` is a comma-separated
  list of decimals or empty. Descriptions must not contain tabs.
* edges file: ``id_u<TAB>id_v``.
* splits file: ``id_u<TAB>id_v<TAB>label<TAB>split<TAB>source``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gtnn.rng import rng_for


class DataError(ValueError):
    """Malformed input data (bad file line, dangling reference, bad shape)."""


@dataclass
class Node:
    id: str
    group: str | None = None
    description: str | None = None
    init_embedding: np.ndarray | None = None


@dataclass
class PairSample:
    """A labeled node pair; label 1 iff source is 'positive'."""

    u: str
    v: str
    label: int
    source: str  # positive | random_negative | hard_negative

    def __post_init__(self):
        if self.u == self.v:
            raise DataError(f"pair ({self.u!r}, {self.v!r}) is a self-pair")
        if self.source not in ("positive", "random_negative", "hard_negative"):
            raise DataError(f"unknown pair source {self.source!r}")
        if (self.label == 1) != (self.source == "positive"):
            raise DataError(f"label {self.label} inconsistent with source {self.source!r}")

    def key(self) -> tuple[str, str]:
        return (self.u, self.v) if self.u <= self.v else (self.v, self.u)


@dataclass
class SplitSet:
    train: list[PairSample]
    valid: list[PairSample]
    test: list[PairSample]
    seed: int

    def all_samples(self) -> list[PairSample]:
        return self.train + self.valid + self.test


class Graph:
    """Immutable undirected graph with dense integer indexing over node ids."""

    def __init__(self, nodes: list[Node], edges: list[tuple[str, str]],
                 drop_isolated: bool = True):
        id_to_node = {}
        for node in nodes:
            if node.id in id_to_node:
                raise DataError(f"duplicate node id {node.id!r}")
            id_to_node[node.id] = node

        seen: set[tuple[str, str]] = set()
        dedup: list[tuple[str, str]] = []
        for u, v in edges:
            for endpoint in (u, v):
                if endpoint not in id_to_node:
                    raise DataError(f"edge endpoint {endpoint!r} is not a declared node")
            if u == v:
                raise DataError(f"self-loop on node {u!r}")
            key = (u, v) if u <= v else (v, u)
            if key in seen:
                continue
            seen.add(key)
            dedup.append(key)

        if drop_isolated:
            touched = {u for u, _ in dedup} | {v for _, v in dedup}
            nodes = [n for n in nodes if n.id in touched]

        self.nodes: list[Node] = list(nodes)
        self.ids: list[str] = [n.id for n in self.nodes]
        self.index: dict[str, int] = {nid: i for i, nid in enumerate(self.ids)}

        dims = {len(n.init_embedding) for n in self.nodes if n.init_embedding is not None}
        if len(dims) > 1:
            raise DataError(f"inconsistent embedding dimensions: {sorted(dims)}")
        self.d_in: int | None = dims.pop() if dims else None

        self.adj: list[list[int]] = [[] for _ in self.nodes]
        self.edge_set: set[tuple[int, int]] = set()
        for u, v in dedup:
            iu, iv = self.index[u], self.index[v]
            self.adj[iu].append(iv)
            self.adj[iv].append(iu)
            self.edge_set.add((iu, iv) if iu < iv else (iv, iu))
        for neighbors in self.adj:
            neighbors.sort()

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edge_set)

    def degree(self, node_id: str) -> int:
        return len(self.adj[self.index[node_id]])

    def has_edge(self, u: str, v: str) -> bool:
        iu, iv = self.index[u], self.index[v]
        return ((iu, iv) if iu < iv else (iv, iu)) in self.edge_set

    def edges(self) -> list[tuple[str, str]]:
        return sorted((self.ids[i], self.ids[j]) for i, j in self.edge_set)

    def embedding_matrix(self) -> np.ndarray:
        """Stack node init embeddings into an (n, d_in) array."""
        if self.d_in is None:
            raise DataError("graph nodes carry no init embeddings")
        missing = [n.id for n in self.nodes if n.init_embedding is None]
        if missing:
            raise DataError(f"nodes without init embedding: {missing[:5]}")
        return np.stack([np.asarray(n.init_embedding, dtype=float) for n in self.nodes])


def _parse_embedding(text: str, path: str, lineno: int) -> np.ndarray | None:
    if not text:
        return None
    try:
        return np.array([float(tok) for tok in text.split(",")], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}:{lineno}: bad embedding value ({exc})") from None


def load_graph(nodes_path: str, edges_path: str) -> Graph:
    """Load a graph from nodes/edges TSV files; isolated nodes are removed."""
    nodes: list[Node] = []
    with open(nodes_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise DataError(f"{nodes_path}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
            nid, group, desc, emb = cols
            if not nid:
                raise DataError(f"{nodes_path}:{lineno}: empty node id")
            nodes.append(Node(
                id=nid,
                group=group or None,
                description=desc or None,
                init_embedding=_parse_embedding(emb, nodes_path, lineno),
            ))

    edges: list[tuple[str, str]] = []
    with open(edges_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise DataError(f"{edges_path}:{lineno}: expected 2 tab-separated columns, got {len(cols)}")
            edges.append((cols[0], cols[1]))

    try:
        return Graph(nodes, edges, drop_isolated=True)
    except DataError as exc:
        raise DataError(f"{edges_path}: {exc}") from None


def write_nodes_tsv(graph: Graph, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# id\tgroup\tdescription\tembedding\n")
        for node in graph.nodes:
            emb = "" if node.init_embedding is None else ",".join(repr(float(x)) for x in node.init_embedding)
            fh.write(f"{node.id}\t{node.group or ''}\t{node.description or ''}\t{emb}\n")


def write_edges_tsv(graph: Graph, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# id_u\tid_v\n")
        for u, v in graph.edges():
            fh.write(f"{u}\t{v}\n")


def write_splits_tsv(splits: SplitSet, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# id_u\tid_v\tlabel\tsplit\tsource\n")
        for name in ("train", "valid", "test"):
            for s in getattr(splits, name):
                fh.write(f"{s.u}\t{s.v}\t{s.label}\t{name}\t{s.source}\n")


def read_splits_tsv(path: str, seed: int = 0) -> SplitSet:
    buckets: dict[str, list[PairSample]] = {"train": [], "valid": [], "test": []}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 tab-separated columns, got {len(cols)}")
            u, v, label, name, source = cols
            if name not in buckets:
                raise DataError(f"{path}:{lineno}: unknown split {name!r}")
            try:
                lab = int(label)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad label {label!r}") from None
            buckets[name].append(PairSample(u=u, v=v, label=lab, source=source))
    return SplitSet(train=buckets["train"], valid=buckets["valid"], test=buckets["test"], seed=seed)


def sample_positive_pairs(graph: Graph, count: int, seed: int) -> list[tuple[str, str]]:
    """Uniformly sample `count` distinct edges to serve as positive pairs.

    Training pair sets are typically a subset of the full edge set; the whole
    graph still feeds the encoder.
    """
    edges = graph.edges()
    if count > len(edges):
        raise ValueError(f"requested {count} positive pairs but graph has {len(edges)} edges")
    rng = rng_for(seed, "positive-pairs")
    chosen = rng.choice(len(edges), size=count, replace=False)
    return [edges[i] for i in sorted(chosen)]


def _hard_candidates(graph: Graph, anchor: int,
                     reach: dict[str, set[int]]) -> list[int]:
    """Nodes u' with a neighbor in anchor's group, (u', anchor) not an edge."""
    group = graph.nodes[anchor].group
    pool = reach.get(group, set())
    blocked = set(graph.adj[anchor]) | {anchor}
    return sorted(pool - blocked)


def sample_negatives(graph: Graph, positives: list[tuple[str, str]], ratio: int,
                     mode: str = "random", seed: int = 0) -> list[PairSample]:
    """Draw ratio * len(positives) negative pairs that are not edges.

    mode 'random' draws uniform non-edges. mode 'hard_plus_random' fills half
    the quota (rounded up) with hard negatives: pairs (u', v) where v anchors
    a positive pair and u' is linked to some node sharing v's group, yet
    (u', v) is not an edge. The remainder is uniform random; a short hard pool
    falls back to random draws. Deterministic under seed.
    """
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    if mode not in ("random", "hard_plus_random"):
        raise ValueError(f"unknown mode {mode!r}")
    if not positives:
        return []

    n = graph.n
    rng = rng_for(seed, "negatives", mode)
    pos_keys = set()
    for u, v in positives:
        iu, iv = graph.index[u], graph.index[v]
        pos_keys.add((iu, iv) if iu < iv else (iv, iu))

    total = ratio * len(positives)
    taken: set[tuple[int, int]] = set()
    out: list[PairSample] = []

    def is_free(iu: int, iv: int) -> bool:
        if iu == iv:
            return False
        key = (iu, iv) if iu < iv else (iv, iu)
        return key not in graph.edge_set and key not in pos_keys and key not in taken

    n_hard = 0
    if mode == "hard_plus_random":
        if any(graph.nodes[graph.index[v]].group is None for pair in positives for v in pair):
            raise ValueError("hard_plus_random requires group labels on all sampled nodes")
        n_hard = math.ceil(total / 2)

        reach: dict[str, set[int]] = {}
        for i, node in enumerate(graph.nodes):
            if node.group is None:
                continue
            for j in graph.adj[i]:
                reach.setdefault(node.group, set()).add(j)

        anchors = [graph.index[v] for _, v in positives]
        candidate_cache: dict[int, list[int]] = {}
        exhausted: set[int] = set()
        produced = 0
        cursor = 0
        stall = 0
        while produced < n_hard and stall < 4 * len(anchors):
            anchor = anchors[cursor % len(anchors)]
            cursor += 1
            if anchor in exhausted:
                stall += 1
                continue
            if anchor not in candidate_cache:
                candidate_cache[anchor] = _hard_candidates(graph, anchor, reach)
            cands = candidate_cache[anchor]
            pick = None
            for _ in range(8):
                if not cands:
                    break
                cand = cands[int(rng.integers(0, len(cands)))]
                if is_free(cand, anchor):
                    pick = cand
                    break
            if pick is None:
                usable = [c for c in cands if is_free(c, anchor)]
                if not usable:
                    exhausted.add(anchor)
                    stall += 1
                    continue
                pick = usable[int(rng.integers(0, len(usable)))]
            key = (pick, anchor) if pick < anchor else (anchor, pick)
            taken.add(key)
            out.append(PairSample(u=graph.ids[pick], v=graph.ids[anchor],
                                  label=0, source="hard_negative"))
            produced += 1
            stall = 0
        n_hard = produced  # shortfall rolls over to random draws

    needed = total - n_hard
    budget = max(1000, 200 * needed)
    attempts = 0
    while needed > 0:
        if attempts >= budget:
            raise ValueError(
                f"could not find {needed} more non-edge pairs after {attempts} attempts; graph too dense")
        attempts += 1
        iu = int(rng.integers(0, n))
        iv = int(rng.integers(0, n))
        if not is_free(iu, iv):
            continue
        key = (iu, iv) if iu < iv else (iv, iu)
        taken.add(key)
        out.append(PairSample(u=graph.ids[iu], v=graph.ids[iv],
                              label=0, source="random_negative"))
        needed -= 1
    return out


def _largest_remainder(total: int, weights: list[float]) -> list[int]:
    raw = [w * total for w in weights]
    base = [int(math.floor(r)) for r in raw]
    leftover = total - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def split(samples: list[PairSample], fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> SplitSet:
    """Partition samples into train/valid/test, stratified by label.

    Split sizes follow `fractions` by largest remainder, and positives are
    apportioned so every split preserves the global positive ratio within one
    sample. Deterministic under seed.
    """
    if len(fractions) != 3:
        raise ValueError("fractions must have three entries")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions sum to {sum(fractions)!r}, expected 1")
    if any(f < 0 for f in fractions):
        raise ValueError("fractions must be nonnegative")
    if len(samples) < 10:
        raise ValueError("need at least 10 samples to split")

    n = len(samples)
    sizes = _largest_remainder(n, list(fractions))

    pos = [s for s in samples if s.label == 1]
    neg = [s for s in samples if s.label != 1]
    pos_counts = _largest_remainder(len(pos), [sz / n for sz in sizes])

    rng = rng_for(seed, "split")
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]

    parts: list[list[PairSample]] = []
    p0 = n0 = 0
    for sz, pc in zip(sizes, pos_counts):
        nc = sz - pc
        parts.append(pos[p0:p0 + pc] + neg[n0:n0 + nc])
        p0 += pc
        n0 += nc
    return SplitSet(train=parts[0], valid=parts[1], test=parts[2], seed=seed)


_SHARED_TOKENS = 5
_GROUP_VOCAB = 20


def synth_graph(n_nodes: int, n_groups: int, p_in: float, p_out: float,
                d_in: int, noise: float, seed: int) -> Graph:
    """Planted-partition graph with group-coded embeddings and token-bag text.

    Nodes are assigned to groups round-robin. Intra-group pairs get an edge
    with probability p_in, inter-group with p_out. Each node's embedding is
    its group one-hot tiled to length d_in plus uniform noise in
    [-noise, noise]; its description is a bag of group-specific tokens plus a
    couple of shared ones. Isolated nodes are dropped.
    """
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ValueError(f"require 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if n_groups < 2:
        raise ValueError("n_groups must be >= 2")
    if n_nodes < n_groups:
        raise ValueError("n_nodes must be >= n_groups")
    if d_in < 1:
        raise ValueError("d_in must be >= 1")
    if noise < 0:
        raise ValueError("noise must be >= 0")

    rng = rng_for(seed, "synth")
    groups = np.arange(n_nodes) % n_groups

    iu, iv = np.triu_indices(n_nodes, k=1)
    prob = np.where(groups[iu] == groups[iv], p_in, p_out)
    keep = rng.random(len(iu)) < prob

    width = len(str(max(n_nodes - 1, 1)))
    ids = [f"n{i:0{width}d}" for i in range(n_nodes)]

    reps = math.ceil(d_in / n_groups)
    vocab = [[f"g{g}t{t}" for t in range(_GROUP_VOCAB)] for g in range(n_groups)]
    shared = [f"s{t}" for t in range(_SHARED_TOKENS)]

    nodes: list[Node] = []
    for i in range(n_nodes):
        g = int(groups[i])
        onehot = np.zeros(n_groups)
        onehot[g] = 1.0
        base = np.tile(onehot, reps)[:d_in]
        emb = base + rng.uniform(-noise, noise, size=d_in)
        length = int(rng.integers(8, 16))
        toks = [vocab[g][int(t)] for t in rng.integers(0, _GROUP_VOCAB, size=length)]
        toks += [shared[int(t)] for t in rng.integers(0, _SHARED_TOKENS, size=2)]
        nodes.append(Node(id=ids[i], group=f"grp{g}", description=" ".join(toks),
                          init_embedding=emb))

    edges = [(ids[a], ids[b]) for a, b in zip(iu[keep], iv[keep])]
    return Graph(nodes, edges, drop_isolated=True)
