"""Top-k label prediction by mixing classifier and shortlist scores.

Each point is transformed, shortlisted against the label index, and every
shortlisted label j gets score beta * sigmoid(logit_j) + (1 - beta) *
sigmoid(cosine_j).  Labels outside the shortlist are excluded outright rather
than scored as sigmoid(0): giving absent labels 0.5 * (1 - beta) ghost mass
would contradict the shortlist's sparsity, so exclusion is the defined
behavior.  Ties break toward the lower label id.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO, TYPE_CHECKING

import numpy as np

from labelsieve.classifier import FeatureTransform, OvaClassifier, stable_sigmoid, transform_features
from labelsieve.dataset import Corpus
from labelsieve.features import embed_points
from labelsieve.shortlist import AnnIndex, query_batch

if TYPE_CHECKING:
    from labelsieve.trainer import ModelBundle


@dataclass(frozen=True)
class PredictConfig:
    beta: float
    k_shortlist: int
    k_output: int = 5

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.k_output < 1 or self.k_shortlist < 1:
            raise ValueError("k_output and k_shortlist must be >= 1")
        if self.k_output > self.k_shortlist:
            raise ValueError(
                f"k_output ({self.k_output}) cannot exceed k_shortlist ({self.k_shortlist})"
            )


@dataclass
class Prediction:
    """Per-point descending (label, score) lists; -1/nan padding when fewer
    than k_output labels exist."""

    ids: np.ndarray     # (N, k_output) int32
    scores: np.ndarray  # (N, k_output) float64

    @property
    def n_points(self) -> int:
        return self.ids.shape[0]

    def row(self, i: int) -> list[tuple[int, float]]:
        return [(int(l), float(s)) for l, s in zip(self.ids[i], self.scores[i]) if l >= 0]


def predict_scores(clf: OvaClassifier, transform: FeatureTransform, index: AnnIndex,
                   dense_features: np.ndarray, config: PredictConfig) -> Prediction:
    """Core scorer over already-dense (untransformed) feature rows."""
    x = np.atleast_2d(np.asarray(dense_features, dtype=np.float64))
    z = transform_features(transform, x)
    sl_ids, sl_cos, _ = query_batch(index, z, config.k_shortlist)
    n, k_eff = sl_ids.shape
    k_out = min(config.k_output, k_eff)
    out_ids = np.full((n, k_out), -1, dtype=np.int32)
    out_scores = np.full((n, k_out), np.nan, dtype=np.float64)
    beta = config.beta
    for i in range(n):
        labels = sl_ids[i]
        valid = labels >= 0
        labels = labels[valid]
        logits = clf.W[labels] @ z[i] + clf.bias[labels]
        mixed = beta * stable_sigmoid(logits) + (1.0 - beta) * stable_sigmoid(sl_cos[i][valid])
        order = np.lexsort((labels, -mixed))[:k_out]
        out_ids[i, :len(order)] = labels[order]
        out_scores[i, :len(order)] = mixed[order]
    return Prediction(out_ids, out_scores)


def predict(bundle: "ModelBundle", dense_feature: np.ndarray,
            config: PredictConfig) -> list[tuple[int, float]]:
    """Single-point prediction from one dense feature row."""
    pred = predict_scores(bundle.clf, bundle.transform, bundle.index,
                          np.atleast_2d(dense_feature), config)
    return pred.row(0)


def predict_batch(bundle: "ModelBundle", corpus: Corpus,
                  config: PredictConfig) -> Prediction:
    """Row-wise prediction for a whole corpus, embedding through the bundle's
    table first."""
    feats = embed_points(corpus, bundle.table, bool(bundle.config["normalize_features"]))
    return predict_scores(bundle.clf, bundle.transform, bundle.index,
                          feats.matrix, config)


def write_predictions(pred: Prediction, target: str | Path | IO[str]) -> None:
    """One line per point: space-separated "label:score" pairs, 6 decimals."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            write_predictions(pred, fh)
        return
    for i in range(pred.n_points):
        target.write(" ".join(f"{l}:{s:.6f}" for l, s in pred.row(i)) + "\n")
