"""Pair-level text features: IR relevance scores, embedding passthrough,
optional pair-text embeddings.

The relevance scorers work off node descriptions. BM25 is directional, so
the pair feature stores the mean of both directions; TF-IDF cosine is
symmetric. Relevance features are min-max normalized to [0, 1] over the
dataset's sampled pairs before entering the decoder input vector, because
raw BM25 magnitudes vary wildly with description length.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from gtnn.graph import Graph

_TOKEN_RE = re.compile(r"[^\W_]+")

RELEVANCE_NAMES = ("bm25", "tfidf")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class CorpusStats:
    """Token statistics over all nonempty node descriptions."""

    doc_count: int
    avg_doc_len: float
    doc_freq: dict[str, int]
    doc_lens: dict[str, int]
    term_counts: dict[str, dict[str, int]]

    def to_json(self) -> str:
        return json.dumps({
            "doc_count": self.doc_count,
            "avg_doc_len": self.avg_doc_len,
            "doc_freq": self.doc_freq,
            "doc_lens": self.doc_lens,
            "term_counts": self.term_counts,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CorpusStats":
        raw = json.loads(text)
        return cls(
            doc_count=raw["doc_count"],
            avg_doc_len=raw["avg_doc_len"],
            doc_freq=dict(raw["doc_freq"]),
            doc_lens=dict(raw["doc_lens"]),
            term_counts={k: dict(v) for k, v in raw["term_counts"].items()},
        )


def build_corpus(graph: Graph) -> CorpusStats:
    """Collect document statistics from every node with a nonempty description."""
    doc_freq: Counter = Counter()
    doc_lens: dict[str, int] = {}
    term_counts: dict[str, dict[str, int]] = {}
    for node in graph.nodes:
        if not node.description:
            continue
        toks = tokenize(node.description)
        if not toks:
            continue
        counts = Counter(toks)
        term_counts[node.id] = dict(counts)
        doc_lens[node.id] = len(toks)
        doc_freq.update(counts.keys())
    if not doc_lens:
        raise ValueError("no text corpus: every node description is empty")
    doc_count = len(doc_lens)
    avg_doc_len = sum(doc_lens.values()) / doc_count
    return CorpusStats(doc_count=doc_count, avg_doc_len=avg_doc_len,
                       doc_freq=dict(doc_freq), doc_lens=doc_lens,
                       term_counts=term_counts)


def _require_doc(stats: CorpusStats, node_id: str) -> dict[str, int]:
    counts = stats.term_counts.get(node_id)
    if counts is None:
        raise ValueError(f"node {node_id!r} has no description in the corpus")
    return counts


def bm25(query_node: str, doc_node: str, stats: CorpusStats,
         k1: float = 1.2, b: float = 0.75) -> float:
    """Okapi BM25 of doc_node's description against query_node's token multiset.

    IDF is ln((N - df + 0.5) / (df + 0.5) + 1), which stays positive even for
    tokens present in every document. Not symmetric in its arguments.
    """
    query = _require_doc(stats, query_node)
    doc = _require_doc(stats, doc_node)
    n_docs = stats.doc_count
    doc_len = stats.doc_lens[doc_node]
    norm = k1 * (1.0 - b + b * doc_len / stats.avg_doc_len)
    score = 0.0
    for token, q_count in query.items():
        tf = doc.get(token, 0)
        if tf == 0:
            continue
        df = stats.doc_freq.get(token, 0)
        idf = math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)
        score += q_count * idf * (tf * (k1 + 1.0)) / (tf + norm)
    return score


def tfidf_cosine(u: str, v: str, stats: CorpusStats) -> float:
    """Cosine similarity of raw-count tf * ln(N/df) vectors; 0 on zero norms."""
    cu = _require_doc(stats, u)
    cv = _require_doc(stats, v)
    n_docs = stats.doc_count

    def weight(token: str, tf: int) -> float:
        return tf * math.log(n_docs / stats.doc_freq[token])

    wu = {t: weight(t, c) for t, c in cu.items()}
    wv = {t: weight(t, c) for t, c in cv.items()}
    nu = math.sqrt(sum(x * x for x in wu.values()))
    nv = math.sqrt(sum(x * x for x in wv.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    dot = sum(w * wv[t] for t, w in wu.items() if t in wv)
    return dot / (nu * nv)


def pair_relevance(u: str, v: str, stats: CorpusStats,
                   k1: float = 1.2, b: float = 0.75) -> np.ndarray:
    """Raw [bm25, tfidf] pair scores; BM25 averaged over both directions."""
    bm = 0.5 * (bm25(u, v, stats, k1, b) + bm25(v, u, stats, k1, b))
    return np.array([bm, tfidf_cosine(u, v, stats)])


def read_pair_embeddings(path: str) -> dict[tuple[str, str], np.ndarray]:
    """Load the optional pair-text embedding file: id_u, id_v, comma floats."""
    table: dict[tuple[str, str], np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated columns")
            u, v, vec = cols
            try:
                emb = np.array([float(x) for x in vec.split(",")], dtype=float)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad embedding value") from None
            table[(u, v) if u <= v else (v, u)] = emb
    return table


@dataclass
class FeatureToggles:
    relevance: bool = True
    passthrough: bool = True
    pair_text: bool = False


@dataclass
class PairFeatures:
    """Assembled decoder input for one node pair, with a recorded layout."""

    passthrough_u: np.ndarray
    passthrough_v: np.ndarray
    relevance: np.ndarray
    pair_text: np.ndarray | None
    vector: np.ndarray
    layout: tuple[tuple[str, int], ...]


class PairFeaturizer:
    """Computes and assembles pair feature vectors with a fixed layout.

    The layout lists the blocks present in `vector`, in order. If every
    toggle is off the passthrough block is kept anyway so the decoder input
    is never empty.
    """

    def __init__(self, graph: Graph, embeddings: np.ndarray,
                 toggles: FeatureToggles | None = None,
                 stats: CorpusStats | None = None,
                 pair_text: dict[tuple[str, str], np.ndarray] | None = None,
                 k1: float = 1.2, b: float = 0.75):
        self.graph = graph
        self.embeddings = np.asarray(embeddings, dtype=float)
        if self.embeddings.shape[0] != graph.n:
            raise ValueError("embedding matrix row count does not match node count")
        self.toggles = toggles or FeatureToggles()
        self.stats = stats
        self.pair_text = pair_text
        self.k1 = k1
        self.b = b
        self.rel_min: np.ndarray | None = None
        self.rel_max: np.ndarray | None = None

        if self.toggles.relevance and stats is None:
            raise ValueError("feature 'relevance' requires a text corpus")
        if self.toggles.pair_text and not pair_text:
            raise ValueError("feature 'pair_text' requires a pair-embedding table")

        d_in = self.embeddings.shape[1]
        layout: list[tuple[str, int]] = []
        if self.toggles.passthrough or not (self.toggles.relevance or self.toggles.pair_text):
            layout += [("passthrough_u", d_in), ("passthrough_v", d_in)]
        if self.toggles.relevance:
            layout.append(("relevance", len(RELEVANCE_NAMES)))
        if self.toggles.pair_text:
            dims = {len(vec) for vec in pair_text.values()}
            if len(dims) != 1:
                raise ValueError("pair_text embeddings have inconsistent dimensions")
            layout.append(("pair_text", dims.pop()))
        self.layout: tuple[tuple[str, int], ...] = tuple(layout)

    @property
    def dim(self) -> int:
        return sum(width for _, width in self.layout)

    def _raw_relevance(self, u: str, v: str) -> np.ndarray:
        return pair_relevance(u, v, self.stats, self.k1, self.b)

    def fit_normalization(self, pairs: list[tuple[str, str]]) -> None:
        """Record per-column min/max of the raw relevance scores over `pairs`."""
        if self.stats is None:
            return
        raw = np.stack([self._raw_relevance(u, v) for u, v in pairs])
        self.rel_min = raw.min(axis=0)
        self.rel_max = raw.max(axis=0)

    def _normalized_relevance(self, u: str, v: str) -> np.ndarray:
        raw = self._raw_relevance(u, v)
        if self.rel_min is None:
            return raw
        span = self.rel_max - self.rel_min
        out = np.where(span > 0, (raw - self.rel_min) / np.where(span > 0, span, 1.0), 0.0)
        return np.clip(out, 0.0, 1.0)

    def features(self, u: str, v: str) -> PairFeatures:
        iu, iv = self.graph.index[u], self.graph.index[v]
        xu = self.embeddings[iu]
        xv = self.embeddings[iv]
        rel = (self._normalized_relevance(u, v) if self.toggles.relevance
               else np.zeros(len(RELEVANCE_NAMES)))
        ptx = None
        if self.toggles.pair_text:
            key = (u, v) if u <= v else (v, u)
            ptx = self.pair_text.get(key)
            if ptx is None:
                raise ValueError(f"feature 'pair_text' missing for pair ({u!r}, {v!r})")
        blocks = {"passthrough_u": xu, "passthrough_v": xv, "relevance": rel, "pair_text": ptx}
        vector = np.concatenate([np.asarray(blocks[name], dtype=float) for name, _ in self.layout])
        return PairFeatures(passthrough_u=xu, passthrough_v=xv, relevance=rel,
                            pair_text=ptx, vector=vector, layout=self.layout)

    def feature_matrix(self, pairs: list[tuple[str, str]]) -> np.ndarray:
        return np.stack([self.features(u, v).vector for u, v in pairs])

    def meta(self) -> dict:
        """Serializable normalization and layout state for checkpoints."""
        return {
            "layout": [list(item) for item in self.layout],
            "toggles": {"relevance": self.toggles.relevance,
                        "passthrough": self.toggles.passthrough,
                        "pair_text": self.toggles.pair_text},
            "rel_min": None if self.rel_min is None else [float(x) for x in self.rel_min],
            "rel_max": None if self.rel_max is None else [float(x) for x in self.rel_max],
            "k1": self.k1,
            "b": self.b,
        }

    def restore_normalization(self, meta: dict) -> None:
        if meta.get("rel_min") is not None:
            self.rel_min = np.array(meta["rel_min"], dtype=float)
            self.rel_max = np.array(meta["rel_max"], dtype=float)


def assemble_pair_features(u: str, v: str, graph: Graph, stats: CorpusStats | None,
                           toggles: FeatureToggles,
                           embeddings: np.ndarray | None = None,
                           pair_text: dict[tuple[str, str], np.ndarray] | None = None) -> PairFeatures:
    """One-shot feature assembly for a single pair (no normalization fit)."""
    if embeddings is None:
        embeddings = graph.embedding_matrix()
    featurizer = PairFeaturizer(graph, embeddings, toggles, stats, pair_text)
    return featurizer.features(u, v)
