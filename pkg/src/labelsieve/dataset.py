"""Corpus parsing, validation, splitting, synthesis, and label statistics.

Text format (the one the public extreme-classification benchmark dumps use),
documented bit-exactly:

* Line 1 (header): ``N V L``: three whitespace-separated non-negative
  integers: number of points, feature dimensionality (vocabulary size),
  and number of labels.
* Lines 2..N+1, one per data point::

      l1,l2,...,lm idx1:val1 idx2:val2 ...

  The first token is a comma-separated list of positive label indices and
  may be empty (the line then starts with whitespace or directly with a
  ``idx:val`` token).  Every remaining token is a sparse feature entry.
  Label indices must lie in ``[0, L)``, feature indices in ``[0, V)``, and
  values must be finite.  Duplicate feature indices on one line are summed;
  entries whose (summed) weight is exactly zero are dropped.  Trailing
  whitespace and CRLF line endings are tolerated.  Files are UTF-8.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np
import scipy.sparse as sp

from labelsieve.errors import ParseError


@dataclass(frozen=True)
class SparseVector:
    """Sorted sparse row: strictly increasing indices, finite nonzero weights."""

    indices: np.ndarray  # int32, strictly increasing
    weights: np.ndarray  # float64, finite, nonzero

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.weights):
            raise ValueError("indices and weights must be the same length")
        if len(self.indices) > 1 and not np.all(np.diff(self.indices) > 0):
            raise ValueError("indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.indices)

    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.weights.tolist()))

    @staticmethod
    def from_entries(entries: Iterable[tuple[int, float]]) -> "SparseVector":
        """Build from (index, weight) pairs; merges duplicates by summing."""
        acc: dict[int, float] = {}
        for idx, w in entries:
            acc[idx] = acc.get(idx, 0.0) + float(w)
        items = sorted((i, w) for i, w in acc.items() if w != 0.0)
        idxs = np.array([i for i, _ in items], dtype=np.int32)
        ws = np.array([w for _, w in items], dtype=np.float64)
        return SparseVector(idxs, ws)


@dataclass(frozen=True)
class Point:
    features: SparseVector
    positives: np.ndarray  # sorted unique int32 label indices


@dataclass
class ParseWarnings:
    """Counters for tolerated irregularities encountered while parsing."""

    duplicate_features: int = 0
    duplicate_labels: int = 0
    zero_weights_dropped: int = 0

    def total(self) -> int:
        return self.duplicate_features + self.duplicate_labels + self.zero_weights_dropped


@dataclass
class Corpus:
    """An immutable collection of sparse points with positive label sets."""

    n_features: int
    n_labels: int
    points: list[Point]
    warnings: ParseWarnings = field(default_factory=ParseWarnings)

    @property
    def n_points(self) -> int:
        return len(self.points)

    def feature_matrix(self) -> sp.csr_matrix:
        """Sparse N x V matrix of feature weights."""
        indptr = np.zeros(self.n_points + 1, dtype=np.int64)
        for i, pt in enumerate(self.points):
            indptr[i + 1] = indptr[i] + len(pt.features)
        nnz = int(indptr[-1])
        indices = np.empty(nnz, dtype=np.int32)
        data = np.empty(nnz, dtype=np.float64)
        for i, pt in enumerate(self.points):
            indices[indptr[i]:indptr[i + 1]] = pt.features.indices
            data[indptr[i]:indptr[i + 1]] = pt.features.weights
        return sp.csr_matrix((data, indices, indptr), shape=(self.n_points, self.n_features))

    def positive_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All (point, positive label) pairs as two aligned int32 arrays."""
        pts = [np.full(len(pt.positives), i, dtype=np.int32) for i, pt in enumerate(self.points)]
        lbls = [pt.positives for pt in self.points]
        if not pts:
            return np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int32)
        return np.concatenate(pts), np.concatenate(lbls)


@dataclass(frozen=True)
class LabelStats:
    """Per-label positive counts over a corpus."""

    frequency: np.ndarray  # int64, length L
    n_points: int


def _parse_header(line: str) -> tuple[int, int, int]:
    parts = line.split()
    if len(parts) != 3:
        raise ParseError(1, f"header must be 'N V L', got {line.strip()!r}")
    try:
        n, v, l = (int(p) for p in parts)
    except ValueError:
        raise ParseError(1, f"header fields must be integers, got {line.strip()!r}") from None
    if n < 0 or v < 1 or l < 1:
        raise ParseError(1, f"header dimensions out of range: N={n} V={v} L={l}")
    return n, v, l


def _parse_point(line: str, line_no: int, n_features: int, n_labels: int,
                 warnings: ParseWarnings) -> Point:
    tokens = line.split()
    label_tok = ""
    feat_start = 0
    if tokens and ":" not in tokens[0]:
        label_tok = tokens[0]
        feat_start = 1

    labels: set[int] = set()
    if label_tok:
        for part in label_tok.split(","):
            try:
                lbl = int(part)
            except ValueError:
                raise ParseError(line_no, f"bad label index {part!r}") from None
            if not 0 <= lbl < n_labels:
                raise ParseError(line_no, f"label index {lbl} out of range [0, {n_labels})")
            if lbl in labels:
                warnings.duplicate_labels += 1
            labels.add(lbl)

    acc: dict[int, float] = {}
    for tok in tokens[feat_start:]:
        idx_s, _, val_s = tok.partition(":")
        if not val_s:
            raise ParseError(line_no, f"feature entry {tok!r} is not 'index:value'")
        try:
            idx = int(idx_s)
            val = float(val_s)
        except ValueError:
            raise ParseError(line_no, f"feature entry {tok!r} is not 'index:value'") from None
        if not 0 <= idx < n_features:
            raise ParseError(line_no, f"feature index {idx} out of range [0, {n_features})")
        if not math.isfinite(val):
            raise ParseError(line_no, f"non-finite feature value {val_s!r}")
        if idx in acc:
            warnings.duplicate_features += 1
            acc[idx] += val
        else:
            acc[idx] = val

    kept = sorted((i, w) for i, w in acc.items() if w != 0.0)
    warnings.zero_weights_dropped += len(acc) - len(kept)
    features = SparseVector(
        np.array([i for i, _ in kept], dtype=np.int32),
        np.array([w for _, w in kept], dtype=np.float64),
    )
    positives = np.array(sorted(labels), dtype=np.int32)
    return Point(features, positives)


def parse_corpus(source: str | Path | IO[str]) -> Corpus:
    """Parse a corpus from a path, a raw string, or a text stream.

    Raises ParseError (with the offending 1-based line number) on a malformed
    header, out-of-range indices, non-finite weights, or a point-count
    mismatch against the header.
    """
    if isinstance(source, Path):
        with open(source, encoding="utf-8") as fh:
            return parse_corpus(fh)
    if isinstance(source, str):
        return parse_corpus(StringIO(source))

    lines: Iterator[str] = iter(source)
    try:
        header = next(lines)
    except StopIteration:
        raise ParseError(1, "empty input, expected 'N V L' header") from None
    n_points, n_features, n_labels = _parse_header(header)

    warnings = ParseWarnings()
    points: list[Point] = []
    for line_no, line in enumerate(lines, start=2):
        if line_no - 1 > n_points:
            if line.strip():
                raise ParseError(line_no, f"more than the declared {n_points} points")
            continue  # tolerate trailing blank lines
        points.append(_parse_point(line, line_no, n_features, n_labels, warnings))
    if len(points) < n_points:
        raise ParseError(
            len(points) + 1,
            f"expected {n_points} points, file ended after {len(points)}",
        )
    return Corpus(n_features, n_labels, points, warnings)


def serialize_corpus(corpus: Corpus, target: str | Path | IO[str] | None = None) -> str | None:
    """Write a corpus in the text format above; parse(serialize(c)) round-trips

    exactly (weights are written with shortest round-trip float formatting)."""
    if target is None:
        buf = StringIO()
        serialize_corpus(corpus, buf)
        return buf.getvalue()
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            serialize_corpus(corpus, fh)
        return None

    target.write(f"{corpus.n_points} {corpus.n_features} {corpus.n_labels}\n")
    for pt in corpus.points:
        labels = ",".join(str(l) for l in pt.positives.tolist())
        feats = " ".join(
            f"{i}:{float(w)!r}" for i, w in zip(pt.features.indices, pt.features.weights)
        )
        target.write(f"{labels} {feats}\n" if feats else f"{labels}\n")
    return None


def label_stats(corpus: Corpus) -> LabelStats:
    """Count, per label, how many points carry it as a positive."""
    if corpus.n_points == 0:
        return LabelStats(np.zeros(corpus.n_labels, dtype=np.int64), 0)
    _, lbls = corpus.positive_pairs()
    freq = np.bincount(lbls, minlength=corpus.n_labels).astype(np.int64)
    return LabelStats(freq, corpus.n_points)


def split(corpus: Corpus, validation_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Disjoint (train, validation) partition by uniform point sampling.

    The validation part gets floor(N * fraction) points; both parts keep the
    original relative point order.  Deterministic per seed.
    """
    if not 0.0 <= validation_fraction < 1.0:
        raise ValueError(f"validation_fraction must be in [0, 1), got {validation_fraction}")
    # epsilon guards against 10 * 0.3 = 2.999... style float droop
    n_val = int(math.floor(corpus.n_points * validation_fraction + 1e-9))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(corpus.n_points)
    val_idx = np.sort(perm[:n_val])
    val_mask = np.zeros(corpus.n_points, dtype=bool)
    val_mask[val_idx] = True
    train_pts = [pt for i, pt in enumerate(corpus.points) if not val_mask[i]]
    val_pts = [corpus.points[i] for i in val_idx]
    train = Corpus(corpus.n_features, corpus.n_labels, train_pts)
    val = Corpus(corpus.n_features, corpus.n_labels, val_pts)
    return train, val


def generate_synthetic(
    n_points: int,
    n_labels: int,
    n_features: int,
    dim: int,
    zipf_exponent: float = 1.1,
    noise: float = 0.05,
    seed: int = 0,
    max_labels_per_point: int = 5,
) -> tuple[Corpus, np.ndarray]:
    """Generate a separable corpus with Zipf-distributed label frequencies.

    Each label gets a planted unit vector drawn from the non-negative orthant.
    Each point picks 1 to max_labels_per_point distinct labels (label
    probabilities proportional to (index+1)**-zipf_exponent, so low indices
    are frequent; the pick count itself is geometrically skewed toward 1).
    Its sparse features encode, under an identity-like embedding table, a
    weighted mean of its labels' planted vectors plus isotropic Gaussian
    noise.  The most frequent picked label gets weight 0.7 and the rest share
    0.3 equally: an unweighted mean leaves near-equal-frequency picks tied and
    noise would break the tie arbitrarily, while the 0.7 margin keeps the
    nearest planted vector equal to the most frequent positive label.  With a
    single pick and zero noise the feature equals the planted vector exactly.

    Returns the corpus and the (n_labels, dim) planted vectors.  Pure function
    of its arguments: the same seed yields a byte-identical corpus.
    """
    if min(n_points, n_labels, n_features, dim) < 1:
        raise ValueError("all sizes must be >= 1")
    if n_features < dim:
        raise ValueError(f"n_features ({n_features}) must be >= dim ({dim})")
    if max_labels_per_point < 1:
        raise ValueError("max_labels_per_point must be >= 1")
    rng = np.random.default_rng(seed)

    planted = np.abs(rng.standard_normal((n_labels, dim)))
    planted /= np.linalg.norm(planted, axis=1, keepdims=True)

    mass = np.arange(1, n_labels + 1, dtype=np.float64) ** (-zipf_exponent)
    probs = mass / mass.sum()

    max_pick = min(max_labels_per_point, n_labels)
    count_probs = 0.3 ** np.arange(max_pick, dtype=np.float64)
    count_probs /= count_probs.sum()

    points: list[Point] = []
    feat_idx = np.arange(dim, dtype=np.int32)
    for _ in range(n_points):
        m = 1 + int(rng.choice(max_pick, p=count_probs))
        labels = rng.choice(n_labels, size=m, replace=False, p=probs)
        if m == 1:
            w = np.ones(1)
        else:
            w = np.full(m, 0.3 / (m - 1))
            w[np.argmax(mass[labels])] = 0.7
        dense = w @ planted[labels]
        if noise > 0:
            dense = dense + noise * rng.standard_normal(dim)
        nz = dense != 0.0
        features = SparseVector(feat_idx[nz].copy(), dense[nz].astype(np.float64))
        points.append(Point(features, np.sort(labels).astype(np.int32)))
    return Corpus(n_features, n_labels, points), planted
