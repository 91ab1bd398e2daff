"""Dense point features from sparse rows and an embedding table; label centroids.

The embedding table maps vocabulary entries to D-dimensional vectors.  A point
with sparse row {(v, w_v)} gets the dense feature sum_v w_v * table[v],
optionally unit-normalized.  A label's centroid is the plain arithmetic mean
of the dense features of the points positive for it (no re-normalization).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from labelsieve.dataset import Corpus
from labelsieve.errors import ParseError


@dataclass(frozen=True)
class EmbeddingTable:
    rows: np.ndarray  # (V, D) float64, finite

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def __post_init__(self) -> None:
        if self.rows.ndim != 2:
            raise ValueError(f"table must be 2-d, got shape {self.rows.shape}")
        if not np.isfinite(self.rows).all():
            raise ValueError("table contains non-finite entries")


def random_table(n_rows: int, dim: int, seed_or_rng: int | np.random.Generator) -> EmbeddingTable:
    """Seeded Gaussian table with rows scaled by 1/sqrt(dim)."""
    rng = (seed_or_rng if isinstance(seed_or_rng, np.random.Generator)
           else np.random.default_rng(seed_or_rng))
    return EmbeddingTable(rng.standard_normal((n_rows, dim)) / np.sqrt(dim))


def identity_table(n_rows: int, dim: int) -> EmbeddingTable:
    """Table whose row v is the v-th standard basis vector (zero when v >= dim)."""
    return EmbeddingTable(np.eye(n_rows, dim))


def load_table(source: str | Path | IO[str]) -> EmbeddingTable:
    """Read a table from text: first line "V D", then V lines of D reals."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return load_table(fh)
    header = source.readline()
    parts = header.split()
    if len(parts) != 2:
        raise ParseError(1, f"table header must be 'V D', got {header.strip()!r}")
    try:
        n_rows, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParseError(1, f"table header must be integers, got {header.strip()!r}") from None
    if n_rows < 1 or dim < 1:
        raise ParseError(1, f"table dimensions out of range: V={n_rows} D={dim}")
    rows = np.empty((n_rows, dim), dtype=np.float64)
    for r in range(n_rows):
        line = source.readline()
        line_no = r + 2
        if not line:
            raise ParseError(line_no, f"expected {n_rows} rows, file ended after {r}")
        vals = line.split()
        if len(vals) != dim:
            raise ParseError(line_no, f"expected {dim} values, got {len(vals)}")
        try:
            rows[r] = [float(v) for v in vals]
        except ValueError:
            raise ParseError(line_no, "non-numeric table entry") from None
        if not np.isfinite(rows[r]).all():
            raise ParseError(line_no, "non-finite table entry")
    return EmbeddingTable(rows)


def save_table(table: EmbeddingTable, target: str | Path | IO[str]) -> None:
    """Write the text format of load_table; round-trips exactly."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            save_table(table, fh)
        return
    target.write(f"{table.n_rows} {table.dim}\n")
    for row in table.rows:
        target.write(" ".join(repr(float(x)) for x in row) + "\n")


@dataclass
class DenseFeatures:
    matrix: np.ndarray  # (N, D) float64
    normalized: bool
    zero_rows: int = 0  # points whose feature vector came out identically zero

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass
class LabelCentroids:
    matrix: np.ndarray  # (L, D) float64
    empty_labels: np.ndarray  # int32 indices of labels with no positive points


def embed_points(corpus: Corpus, table: EmbeddingTable, normalize: bool) -> DenseFeatures:
    """Dense features: row i = sum_v w_iv * table[v], unit-normalized on request.

    Zero rows (empty sparse vectors, or rows that cancel to zero) are left as
    zero and counted.
    """
    if corpus.n_features != table.n_rows:
        raise ValueError(
            f"corpus has {corpus.n_features} features but table has {table.n_rows} rows"
        )
    mat = np.asarray(corpus.feature_matrix() @ table.rows, dtype=np.float64)
    if mat.shape != (corpus.n_points, table.dim):
        mat = mat.reshape(corpus.n_points, table.dim)
    norms = np.linalg.norm(mat, axis=1)
    zero_rows = int(np.sum(norms == 0.0))
    if normalize:
        nz = norms > 0.0
        mat[nz] /= norms[nz, None]
    return DenseFeatures(np.ascontiguousarray(mat), normalize, zero_rows)


def compute_centroids(features: DenseFeatures, corpus: Corpus) -> LabelCentroids:
    """Exact per-label means of positive points' features; empty labels get
    zero rows and are listed."""
    if features.matrix.shape[0] != corpus.n_points:
        raise ValueError(
            f"features have {features.matrix.shape[0]} rows, corpus has {corpus.n_points}"
        )
    acc = np.zeros((corpus.n_labels, features.dim), dtype=np.float64)
    counts = np.zeros(corpus.n_labels, dtype=np.int64)
    pts, lbls = corpus.positive_pairs()
    np.add.at(acc, lbls, features.matrix[pts])
    np.add.at(counts, lbls, 1)
    nz = counts > 0
    acc[nz] /= counts[nz, None]
    empty = np.flatnonzero(~nz).astype(np.int32)
    return LabelCentroids(acc, empty)
