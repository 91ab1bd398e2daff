"""Approximate top-k cosine search over label embeddings, plus an exact oracle.

The index is a layered proximity graph (greedy descent on upper layers, beam
search on layer 0) storing unit-normalized label embeddings.  Graph distance
is cosine distance 1 - cos.  Zero-norm label embeddings are pinned to cosine
-1 (distance 2) so they rank strictly last; zero-norm queries get a defined
deterministic answer (labels 0..k-1, score 0) and are counted.
All ties anywhere break toward the lower label id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from labelsieve import _core
from labelsieve.dataset import Corpus
from labelsieve.features import DenseFeatures


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 200
    ef_search: int = 0  # 0 means auto: max(100, 4k) at query time

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if self.ef_construction < 1 or self.ef_search < 0:
            raise ValueError("ef_construction must be >= 1 and ef_search >= 0")

    def effective_ef(self, k: int) -> int:
        ef = self.ef_search if self.ef_search > 0 else max(100, 4 * k)
        return max(ef, k)


@dataclass
class AnnIndex:
    vectors: np.ndarray      # (L, D) unit rows (zero rows for zero-norm labels)
    zero_mask: np.ndarray    # (L,) uint8
    neighbors: list[np.ndarray]  # per layer, (L, cap) int32, -1 padded
    counts: list[np.ndarray]     # per layer, (L,) int32
    entry: int
    params: HnswParams

    @property
    def n_labels(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class Shortlist:
    """Per-point top-k labels with cosine scores, sorted descending by score."""

    ids: np.ndarray      # (N, k) int32
    scores: np.ndarray   # (N, k) float64
    k: int
    zero_queries: int = 0
    flagged_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int32))

    @property
    def n_points(self) -> int:
        return self.ids.shape[0]


def draw_levels(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Geometric layer assignment with multiplier 1/ln(m)."""
    mult = 1.0 / math.log(m)
    u = 1.0 - rng.random(n)  # in (0, 1]: keeps -log finite
    return np.floor(-np.log(u) * mult).astype(np.int32)


def _normalize_rows(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mat = np.ascontiguousarray(np.asarray(mat, dtype=np.float64))
    norms = np.linalg.norm(mat, axis=1)
    zero = norms == 0.0
    out = mat.copy()
    out[~zero] /= norms[~zero, None]
    return out, zero.astype(np.uint8)


def build_index(label_embeddings: np.ndarray, params: HnswParams, seed: int) -> AnnIndex:
    """Build the layered graph over all L label embeddings, deterministically."""
    emb = np.asarray(label_embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] < 1 or emb.shape[1] < 1:
        raise ValueError(f"label embeddings must be (L >= 1, D >= 1), got {emb.shape}")
    if not np.isfinite(emb).all():
        raise ValueError("label embeddings contain non-finite entries")
    vectors, zero_mask = _normalize_rows(emb)
    levels = draw_levels(emb.shape[0], params.m, np.random.default_rng(seed))
    nbrs, cnts, entry = _core.build_graph(vectors, zero_mask, levels,
                                          params.m, params.ef_construction)
    return AnnIndex(vectors, zero_mask, [np.asarray(a) for a in nbrs],
                    [np.asarray(c) for c in cnts], int(entry), params)


def query_batch(index: AnnIndex, queries: np.ndarray, k: int,
                ef: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-k (ids, cosines) per query row plus indices of zero-norm queries.

    Returns min(k, L) columns; scores are descending within each row.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if q.shape[1] != index.dim:
        raise ValueError(f"query dim {q.shape[1]} != index dim {index.dim}")
    if not np.isfinite(q).all():
        raise ValueError("queries contain non-finite entries")
    k_eff = min(k, index.n_labels)
    q_norm, q_zero = _normalize_rows(q)
    zero_rows = np.flatnonzero(q_zero).astype(np.int32)

    ids = np.tile(np.arange(k_eff, dtype=np.int32), (q.shape[0], 1))
    scores = np.zeros((q.shape[0], k_eff), dtype=np.float64)
    live = np.flatnonzero(q_zero == 0)
    if len(live):
        got_ids, got_dists = _core.search_many(
            index.vectors, index.zero_mask, index.neighbors, index.counts,
            index.entry, np.ascontiguousarray(q_norm[live]),
            index.params.effective_ef(k_eff), k_eff)
        ids[live] = got_ids
        scores[live] = 1.0 - got_dists
    return ids, scores, zero_rows


def query_topk(index: AnnIndex, query_vector: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Single-query convenience wrapper: list of (label, cosine), descending."""
    ids, scores, _ = query_batch(index, np.atleast_2d(query_vector), k)
    return [(int(i), float(s)) for i, s in zip(ids[0], scores[0])]


def brute_force_topk(label_embeddings: np.ndarray, query: np.ndarray,
                     k: int) -> list[tuple[int, float]]:
    """Exact top-k by cosine, ties to the lower label; the testing oracle."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    emb = np.asarray(label_embeddings, dtype=np.float64)
    vectors, zero_mask = _normalize_rows(emb)
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0.0:
        scores = np.zeros(emb.shape[0])
    else:
        scores = vectors @ (q / qn)
        scores[zero_mask == 1] = -1.0
    order = np.lexsort((np.arange(emb.shape[0]), -scores))[:min(k, emb.shape[0])]
    return [(int(i), float(scores[i])) for i in order]


def build_shortlists(index: AnnIndex, features, corpus: Corpus, k: int) -> Shortlist:
    """Per-point ANN top-k over the label index (pure ANN output; consumers
    union it with the point's positives downstream)."""
    mat = features.matrix if isinstance(features, DenseFeatures) else np.asarray(features)
    if mat.shape[0] != corpus.n_points:
        raise ValueError(f"features have {mat.shape[0]} rows, corpus has {corpus.n_points}")
    ids, scores, zero_rows = query_batch(index, mat, k)
    return Shortlist(ids, scores, min(k, index.n_labels),
                     zero_queries=len(zero_rows), flagged_rows=zero_rows)


def hnsw_score(shortlist: Shortlist, point: int, label: int) -> float:
    """Stored cosine when (point, label) was shortlisted, else 0."""
    row = shortlist.ids[point]
    hit = np.flatnonzero(row == label)
    if len(hit) == 0:
        return 0.0
    return float(shortlist.scores[point, hit[0]])
