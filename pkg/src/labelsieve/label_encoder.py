"""Label encoder: maps label centroids to non-negative D-dimensional embeddings.

Architecture: two stacked affine layers with a single outer ReLU,

    embedding(mu) = ReLU(W2 (W1 mu + b1) + b2)

There is deliberately no nonlinearity between the layers, so the composition
is algebraically one affine map followed by ReLU; the two-layer form only
controls parameter count via the hidden width.

Training minimizes the mean over points of the per-positive-pair penalty
log(1 + ||x_i - embedding(mu_j)||^2), where x_i is the point's dense feature
and j ranges over the point's positive labels.  The 1/N factor uses the full
corpus size even for batch-restricted gradients.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from labelsieve.dataset import Corpus
from labelsieve.errors import TrainingDiverged
from labelsieve.features import DenseFeatures, compute_centroids


@dataclass
class LabelEncoderParams:
    W1: np.ndarray  # (hidden, D)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (D, hidden)
    b2: np.ndarray  # (D,)

    @property
    def dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    def validate(self) -> None:
        h, d = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape != (d, h) or self.b2.shape != (d,):
            raise ValueError(
                f"inconsistent encoder shapes: W1 {self.W1.shape} b1 {self.b1.shape} "
                f"W2 {self.W2.shape} b2 {self.b2.shape}"
            )

    def copy(self) -> "LabelEncoderParams":
        return LabelEncoderParams(self.W1.copy(), self.b1.copy(),
                                  self.W2.copy(), self.b2.copy())


@dataclass(frozen=True)
class EncoderTrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 1024
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class EncoderTrainReport:
    initial_loss: float
    final_loss: float
    epoch_losses: list[float] = dataclasses.field(default_factory=list)


def init_params(dim: int, hidden_dim: int, rng: np.random.Generator) -> LabelEncoderParams:
    """Gaussian weights with variance 1/fan_in, zero biases."""
    w1 = rng.standard_normal((hidden_dim, dim)) / np.sqrt(dim)
    w2 = rng.standard_normal((dim, hidden_dim)) / np.sqrt(hidden_dim)
    return LabelEncoderParams(w1, np.zeros(hidden_dim), w2, np.zeros(dim))


def encode_labels(params: LabelEncoderParams, centroids: np.ndarray) -> np.ndarray:
    """Forward pass over an (L, D) centroid matrix; output is elementwise >= 0."""
    params.validate()
    centroids = np.asarray(centroids, dtype=np.float64)
    if centroids.ndim != 2 or centroids.shape[1] != params.dim:
        raise ValueError(
            f"centroids shape {centroids.shape} incompatible with encoder dim {params.dim}"
        )
    hidden = centroids @ params.W1.T + params.b1
    return np.maximum(hidden @ params.W2.T + params.b2, 0.0)


def _features_matrix(features) -> np.ndarray:
    if isinstance(features, DenseFeatures):
        return features.matrix
    return np.asarray(features, dtype=np.float64)


def _pair_arrays(features, corpus: Corpus) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mat = _features_matrix(features)
    cents = compute_centroids(DenseFeatures(mat, False), corpus).matrix
    pts, lbls = corpus.positive_pairs()
    return mat, cents, np.stack([pts, lbls], axis=1) if len(pts) else np.empty((0, 2), np.int32)


def _pair_forward(params: LabelEncoderParams, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    hidden = mu @ params.W1.T + params.b1
    pre = hidden @ params.W2.T + params.b2
    return hidden, pre, np.maximum(pre, 0.0)


def label_loss(params: LabelEncoderParams, features, corpus: Corpus) -> float:
    """Mean over points of sum over positive pairs of log(1 + squared distance)."""
    if corpus.n_points == 0:
        raise ValueError("loss undefined on an empty corpus")
    mat, cents, pairs = _pair_arrays(features, corpus)
    if len(pairs) == 0:
        return 0.0
    _, _, y = _pair_forward(params, cents[pairs[:, 1]])
    u = mat[pairs[:, 0]] - y
    return float(np.sum(np.log1p(np.sum(u * u, axis=1))) / corpus.n_points)


def _batch_grads(params: LabelEncoderParams, x: np.ndarray, mu: np.ndarray,
                 n_points: int) -> tuple[float, list[np.ndarray]]:
    """Loss and parameter gradients for one batch of (feature, centroid) pairs."""
    hidden, pre, y = _pair_forward(params, mu)
    u = x - y
    r = np.sum(u * u, axis=1)
    loss = float(np.sum(np.log1p(r)) / n_points)
    d_y = (-2.0 / n_points) * u / (1.0 + r)[:, None]
    d_pre = d_y * (pre > 0.0)  # ReLU subgradient at 0 is 0
    g_w2 = d_pre.T @ hidden
    g_b2 = d_pre.sum(axis=0)
    d_hidden = d_pre @ params.W2
    g_w1 = d_hidden.T @ mu
    g_b1 = d_hidden.sum(axis=0)
    return loss, [g_w1, g_b1, g_w2, g_b2]


def label_loss_gradient(params: LabelEncoderParams, features, corpus: Corpus,
                        pairs: np.ndarray | None = None) -> list[np.ndarray]:
    """Gradients [dW1, db1, dW2, db2] of the (optionally pair-restricted) loss.

    The 1/N factor always uses the full corpus point count, so restricting
    `pairs` scales contributions exactly like dropping terms from the sum.
    """
    mat, cents, all_pairs = _pair_arrays(features, corpus)
    if pairs is None:
        pairs = all_pairs
    if len(pairs) == 0:
        return [np.zeros_like(params.W1), np.zeros_like(params.b1),
                np.zeros_like(params.W2), np.zeros_like(params.b2)]
    _, grads = _batch_grads(params, mat[pairs[:, 0]], cents[pairs[:, 1]], corpus.n_points)
    return grads


def train_label_encoder(
    params: LabelEncoderParams,
    features,
    corpus: Corpus,
    config: EncoderTrainConfig,
) -> tuple[LabelEncoderParams, EncoderTrainReport]:
    """Mini-batch Adam over positive (point, label) pairs for config.epochs.

    Centroids are computed once from the given features and stay fixed for the
    whole run.  Returns fresh parameters (the input object is not mutated) and
    a loss report.  Raises TrainingDiverged when the loss stops being finite.
    """
    from labelsieve.optim import DenseAdam

    mat, cents, pairs = _pair_arrays(features, corpus)

    def full_loss(p: LabelEncoderParams) -> float:
        if len(pairs) == 0:
            return 0.0
        _, _, y = _pair_forward(p, cents[pairs[:, 1]])
        u = mat[pairs[:, 0]] - y
        return float(np.sum(np.log1p(np.sum(u * u, axis=1))) / corpus.n_points)

    initial = full_loss(params)
    report = EncoderTrainReport(initial, initial)
    if config.epochs == 0 or len(pairs) == 0:
        return params, report

    params = params.copy()
    adam = DenseAdam([params.W1, params.b1, params.W2, params.b2], config.learning_rate)
    rng = np.random.default_rng(config.seed)
    # overflow here is not an error condition: it is how divergence manifests,
    # and the per-epoch finiteness check turns it into TrainingDiverged
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            order = rng.permutation(len(pairs))
            for start in range(0, len(order), config.batch_size):
                batch = pairs[order[start:start + config.batch_size]]
                _, grads = _batch_grads(params, mat[batch[:, 0]], cents[batch[:, 1]],
                                        corpus.n_points)
                adam.step(grads)
            epoch_loss = full_loss(params)
            if not np.isfinite(epoch_loss):
                raise TrainingDiverged(
                    f"encoder loss became {epoch_loss} in epoch {epoch + 1}")
            report.epoch_losses.append(epoch_loss)
    report.final_loss = report.epoch_losses[-1]
    return params, report
