"""One-vs-all classifier over shortlisted labels, trained jointly with a
feature transform.

Per point i the loss sums binary cross-entropy with logits over the label
union positives(i) | shortlist(i): sum_i sum_j bce(w_j . z_i + bias_j, y_ij)
with z_i = ReLU(Wx x_i + bx).  No normalization, no loss weighting.  Within a
training step only the union's label rows receive updates (the sparse-update
contract); the transform updates densely.  The per-label bias is an extra
degree of freedom that helps rare labels and can be disabled for a strict
bias-free model.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from labelsieve import _core
from labelsieve.dataset import Corpus
from labelsieve.errors import TrainingDiverged
from labelsieve.optim import DenseAdam, RowAdam
from labelsieve.shortlist import Shortlist


@dataclass
class FeatureTransform:
    Wx: np.ndarray  # (D, D)
    bx: np.ndarray  # (D,)

    @property
    def dim(self) -> int:
        return self.Wx.shape[0]

    def copy(self) -> "FeatureTransform":
        return FeatureTransform(self.Wx.copy(), self.bx.copy())


def identity_transform(dim: int) -> FeatureTransform:
    """Identity init: cycle-1 transformed features equal ReLU of the raw ones."""
    return FeatureTransform(np.eye(dim), np.zeros(dim))


@dataclass
class OvaClassifier:
    W: np.ndarray     # (L, D), row j is label j's weight vector
    bias: np.ndarray  # (L,)

    @property
    def n_labels(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "OvaClassifier":
        return OvaClassifier(self.W.copy(), self.bias.copy())


def init_classifier(n_labels: int, dim: int) -> OvaClassifier:
    """All-zero init: every initial logit is 0, so the loss starts at
    (union size) * ln 2."""
    return OvaClassifier(np.zeros((n_labels, dim)), np.zeros(n_labels))


def transform_features(t: FeatureTransform, x: np.ndarray) -> np.ndarray:
    """z = ReLU(Wx x + bx), row-wise for matrices."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != t.dim:
        raise ValueError(f"feature dim {x.shape[-1]} != transform dim {t.dim}")
    return np.maximum(x @ t.Wx.T + t.bx, 0.0)


def clf_logit(clf: OvaClassifier, z: np.ndarray, label: int) -> float:
    if not 0 <= label < clf.n_labels:
        raise IndexError(f"label {label} out of range [0, {clf.n_labels})")
    return float(np.dot(clf.W[label], z) + clf.bias[label])


def bce_with_logits(logit, target):
    """Numerically stable -y log s(x) - (1-y) log(1-s(x)); elementwise."""
    x = np.asarray(logit, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    out = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def union_pairs(corpus: Corpus, shortlists: Shortlist,
                extra_negatives: list[np.ndarray] | None = None
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattened (point, label, target) arrays over positives | shortlist
    (| optional extra negatives), distinct labels per point."""
    if shortlists.n_points != corpus.n_points:
        raise ValueError(
            f"shortlists cover {shortlists.n_points} points, corpus has {corpus.n_points}"
        )
    pts: list[np.ndarray] = []
    lbls: list[np.ndarray] = []
    tgts: list[np.ndarray] = []
    for i, pt in enumerate(corpus.points):
        row = shortlists.ids[i]
        union = np.union1d(pt.positives, row[row >= 0]).astype(np.int32)
        if extra_negatives is not None and len(extra_negatives[i]):
            union = np.union1d(union, extra_negatives[i]).astype(np.int32)
        pts.append(np.full(len(union), i, dtype=np.int32))
        lbls.append(union)
        tgts.append(np.isin(union, pt.positives).astype(np.float64))
    if not pts:
        empty = np.empty(0, dtype=np.int32)
        return empty, empty.copy(), np.empty(0, dtype=np.float64)
    return np.concatenate(pts), np.concatenate(lbls), np.concatenate(tgts)


def classifier_loss(clf: OvaClassifier, transform: FeatureTransform, features,
                    corpus: Corpus, shortlists: Shortlist,
                    extra_negatives: list[np.ndarray] | None = None) -> float:
    """Sum over all (point, union label) pairs of bce(logit, target)."""
    mat = features.matrix if hasattr(features, "matrix") else np.asarray(features)
    z = transform_features(transform, mat)
    pi, pj, y = union_pairs(corpus, shortlists, extra_negatives)
    total = 0.0
    # chunked: z[pi] over all pairs at once would gather pairs x dim floats,
    # gigabytes at full scale
    step = 200_000
    for s in range(0, len(pi), step):
        i, j = pi[s:s + step], pj[s:s + step]
        logits = np.einsum("ij,ij->i", z[i], clf.W[j]) + clf.bias[j]
        total += float(np.sum(bce_with_logits(logits, y[s:s + step])))
    return total


def classifier_gradients(clf: OvaClassifier, transform: FeatureTransform, features,
                         corpus: Corpus, shortlists: Shortlist
                         ) -> dict[str, np.ndarray]:
    """Full-batch gradients of classifier_loss wrt W, bias, Wx, bx."""
    mat = features.matrix if hasattr(features, "matrix") else np.asarray(features)
    pre = mat @ transform.Wx.T + transform.bx
    z = np.maximum(pre, 0.0)
    pi, pj, y = union_pairs(corpus, shortlists)
    d_w = np.zeros_like(clf.W)
    d_bias = np.zeros_like(clf.bias)
    d_z = np.zeros_like(z)
    _core.ova_batch_grad(np.ascontiguousarray(z), clf.W, clf.bias,
                         pi, pj, y, d_w, d_bias, d_z)
    d_pre = d_z * (pre > 0.0)
    return {"W": d_w, "bias": d_bias,
            "Wx": d_pre.T @ mat, "bx": d_pre.sum(axis=0)}


@dataclass(frozen=True)
class ClassifierTrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 8
    seed: int = 0
    use_bias: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class ClassifierTrainReport:
    initial_loss: float
    final_loss: float
    epoch_losses: list[float] = dataclasses.field(default_factory=list)


@dataclass
class ClassifierOptimizers:
    """Adam state for W rows, bias rows, and the dense transform; kept by the
    caller so moments persist across training calls."""

    w_opt: RowAdam
    bias_opt: RowAdam
    transform_opt: DenseAdam

    @staticmethod
    def fresh(clf: OvaClassifier, transform: FeatureTransform,
              learning_rate: float) -> "ClassifierOptimizers":
        return ClassifierOptimizers(
            RowAdam(clf.W, learning_rate),
            RowAdam(clf.bias, learning_rate),
            DenseAdam([transform.Wx, transform.bx], learning_rate),
        )


def train_classifier(
    clf: OvaClassifier,
    transform: FeatureTransform,
    features,
    corpus: Corpus,
    shortlists: Shortlist,
    config: ClassifierTrainConfig,
    optimizers: ClassifierOptimizers | None = None,
    extra_negatives: list[np.ndarray] | None = None,
) -> tuple[OvaClassifier, FeatureTransform, ClassifierTrainReport]:
    """Joint mini-batch Adam over points; clf and transform update IN PLACE
    (their arrays are tied to the optimizer state).

    Per step, only W/bias rows of labels in the batch's unions move; the
    transform moves densely.  Epoch loss is the running sum of batch losses;
    a non-finite value aborts with TrainingDiverged.
    """
    mat = features.matrix if hasattr(features, "matrix") else np.asarray(features)
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    report = ClassifierTrainReport(0.0, 0.0)
    report.initial_loss = classifier_loss(clf, transform, mat, corpus, shortlists,
                                          extra_negatives)
    report.final_loss = report.initial_loss
    if config.epochs == 0 or corpus.n_points == 0:
        return clf, transform, report

    if optimizers is None:
        optimizers = ClassifierOptimizers.fresh(clf, transform, config.learning_rate)

    # flat per-point unions, sliceable per batch through an index array
    pi_all, pj_all, y_all = union_pairs(corpus, shortlists, extra_negatives)
    offsets = np.zeros(corpus.n_points + 1, dtype=np.int64)
    np.add.at(offsets[1:], pi_all, 1)
    offsets = np.cumsum(offsets)

    d_w = np.zeros_like(clf.W)
    d_bias = np.zeros_like(clf.bias)
    rng = np.random.default_rng(config.seed)

    # overflow here means the run diverged; the per-epoch finiteness
    # check in the loop turns that into TrainingDiverged, not warnings
    with np.errstate(over="ignore", invalid="ignore"):
        _train_loop(clf, transform, mat, corpus, config, optimizers, rng,
                    offsets, pj_all, y_all, d_w, d_bias, report)
    report.final_loss = report.epoch_losses[-1]
    return clf, transform, report


def _train_loop(clf, transform, mat, corpus, config, optimizers, rng,
                offsets, pj_all, y_all, d_w, d_bias, report):
    for epoch in range(config.epochs):
        order = rng.permutation(corpus.n_points)
        epoch_loss = 0.0
        for start in range(0, corpus.n_points, config.batch_size):
            batch = order[start:start + config.batch_size]
            spans = [np.arange(offsets[p], offsets[p + 1]) for p in batch]
            take = np.concatenate(spans) if spans else np.empty(0, dtype=np.int64)
            if len(take) == 0:
                continue
            local = np.repeat(np.arange(len(batch), dtype=np.int32),
                              [len(s) for s in spans])
            pj = np.ascontiguousarray(pj_all[take])
            y = np.ascontiguousarray(y_all[take])

            x_b = mat[batch]
            pre = x_b @ transform.Wx.T + transform.bx
            z_b = np.ascontiguousarray(np.maximum(pre, 0.0))
            d_z = np.zeros_like(z_b)
            loss = _core.ova_batch_grad(z_b, clf.W, clf.bias, local, pj, y,
                                        d_w, d_bias, d_z)
            epoch_loss += loss

            touched = np.unique(pj)
            optimizers.w_opt.step(touched, d_w[touched])
            if config.use_bias:
                optimizers.bias_opt.step(touched, d_bias[touched])
            d_w[touched] = 0.0
            d_bias[touched] = 0.0

            d_pre = d_z * (pre > 0.0)
            optimizers.transform_opt.step([d_pre.T @ x_b, d_pre.sum(axis=0)])
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(f"classifier loss became {epoch_loss} in epoch {epoch + 1}")
        report.epoch_losses.append(epoch_loss)
