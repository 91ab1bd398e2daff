"""Cyclic training loop and the serialized model bundle.

Schedule semantics: the classifier trains e_model epochs total, in chunks of
at most e_hat_label.  Before every chunk the label encoder trains e_label
epochs on the current features and the shortlist index is rebuilt, so each
classifier chunk always sees shortlists produced by the encoder trained in
the same cycle.  The encoder therefore runs

    n_retrains = floor(e_model / e_hat_label) + 1

times (once when e_model = 0): once up front, then after every completed
chunk, including a final retraining when e_hat_label divides e_model exactly
(that last cycle trains the classifier for 0 epochs but still refreshes the
index, which changes predictions through the cosine term).

Feature handoff: cycle 1 feeds the raw dense features to the encoder and
shortlist queries; later cycles feed the transformed features, because that
is what the classifier sees.  Inference always transforms.

Bundle file layout (all integers little-endian):

    b"LSBL" | u32 version | u32 header_len | header JSON | raw arrays | u32 CRC32

The header JSON (sorted keys, no whitespace) carries the config, the cycle
log, scalar metadata, and an array manifest of (name, dtype, shape) in the
order the raw bytes follow.  The CRC covers every preceding byte and is
checked before anything is parsed, so any single-byte corruption is caught.
Nothing time-dependent is stored: two runs with the same seed produce
byte-identical files.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from labelsieve.classifier import (
    ClassifierOptimizers,
    ClassifierTrainConfig,
    FeatureTransform,
    OvaClassifier,
    identity_transform,
    init_classifier,
    train_classifier,
    transform_features,
)
from labelsieve.config import DEFAULTS, validate_config
from labelsieve.dataset import Corpus, split
from labelsieve.errors import BundleChecksumError, BundleFormatError
from labelsieve.features import DenseFeatures, EmbeddingTable, compute_centroids, embed_points
from labelsieve.inference import PredictConfig, predict_scores
from labelsieve.label_encoder import (
    EncoderTrainConfig,
    LabelEncoderParams,
    encode_labels,
    init_params,
    train_label_encoder,
)
from labelsieve.metrics import precision_at_k
from labelsieve.seeding import (
    STAGE_CLASSIFIER,
    STAGE_ENCODER_BATCH,
    STAGE_ENCODER_INIT,
    STAGE_INDEX,
    STAGE_RANDOM_NEGATIVES,
    STAGE_SPLIT,
    stage_rng,
    stage_seed,
)
from labelsieve.shortlist import AnnIndex, HnswParams, build_index, build_shortlists

_MAGIC = b"LSBL"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainSchedule:
    e_model: int
    e_label: int
    e_hat_label: int

    def __post_init__(self) -> None:
        if self.e_model < 0 or self.e_label < 0 or self.e_hat_label < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.e_model > 0 and self.e_hat_label < 1:
            raise ValueError("e_hat_label must be >= 1 when e_model > 0")

    @property
    def n_retrains(self) -> int:
        if self.e_model == 0:
            return 1
        return self.e_model // self.e_hat_label + 1


def total_epochs(s: TrainSchedule) -> int:
    """Classifier epochs plus every encoder retraining's epochs."""
    return s.e_model + s.e_label * s.n_retrains


@dataclass
class ModelBundle:
    table: EmbeddingTable
    encoder: LabelEncoderParams
    transform: FeatureTransform
    clf: OvaClassifier
    index: AnnIndex
    config: dict
    cycle_log: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def run_training(corpus: Corpus, config: dict, table: EmbeddingTable,
                 log=None) -> ModelBundle:
    """Full pipeline: embed, then cycle encoder / index / classifier.

    Returns the bundle whose validation P@1 was highest (earliest cycle wins
    ties); with validation_fraction 0 the final state is returned.  `log`
    receives progress lines when given.
    """
    cfg = validate_config({**DEFAULTS, **config})
    emit = log if log is not None else (lambda line: None)
    if corpus.n_points == 0:
        raise ValueError("cannot train on an empty corpus")

    schedule = TrainSchedule(cfg["e_model"], cfg["e_label"], cfg["e_hat_label"])
    emit(f"total epochs: {total_epochs(schedule)}")

    root = cfg["seed"]
    train_c, val_c = split(corpus, cfg["validation_fraction"],
                           stage_seed(root, STAGE_SPLIT))
    if train_c.n_points == 0:
        raise ValueError("validation split left no training points")
    feats = embed_points(train_c, table, cfg["normalize_features"])
    val_feats = None
    if val_c.n_points > 0:
        val_feats = embed_points(val_c, table, cfg["normalize_features"])

    dim = table.dim
    hidden = cfg["hidden_dim"] if cfg["hidden_dim"] > 0 else dim
    encoder = init_params(dim, hidden, stage_rng(root, STAGE_ENCODER_INIT))
    transform = identity_transform(dim)
    clf = init_classifier(corpus.n_labels, dim)
    optimizers = ClassifierOptimizers.fresh(clf, transform, cfg["learning_rate"])
    hnsw = HnswParams(cfg["hnsw_m"], cfg["ef_construction"], cfg["ef_search"])
    k_sl = min(cfg["shortlist_k"], corpus.n_labels)
    k_out = min(cfg["k_output"], k_sl)

    remaining = cfg["e_model"]
    executed_clf = 0
    executed_enc = 0
    cycle_log: list[dict] = []
    best_p1 = -math.inf
    best = None  # (cycle, encoder, transform copy, clf copy, index)
    index = None

    for cycle in range(1, schedule.n_retrains + 1):
        if cycle == 1:
            cyc_feats = feats
        else:
            cyc_feats = DenseFeatures(
                transform_features(transform, feats.matrix), False)

        encoder, enc_report = train_label_encoder(
            encoder, cyc_feats, train_c,
            EncoderTrainConfig(cfg["learning_rate"], cfg["e_label"],
                               cfg["encoder_batch_size"],
                               stage_seed(root, STAGE_ENCODER_BATCH, cycle)))
        executed_enc += cfg["e_label"]

        centroids = compute_centroids(cyc_feats, train_c)
        label_emb = encode_labels(encoder, centroids.matrix)
        index = build_index(label_emb, hnsw, stage_seed(root, STAGE_INDEX, cycle))
        shortlists = build_shortlists(index, cyc_feats, train_c, k_sl)

        extra = None
        if cfg["random_negatives"] > 0:
            neg_rng = stage_rng(root, STAGE_RANDOM_NEGATIVES, cycle)
            extra = [neg_rng.integers(0, corpus.n_labels,
                                      size=cfg["random_negatives"]).astype(np.int32)
                     for _ in range(train_c.n_points)]

        e_this = min(cfg["e_hat_label"], remaining)
        remaining -= e_this
        clf, transform, clf_report = train_classifier(
            clf, transform, feats, train_c, shortlists,
            ClassifierTrainConfig(cfg["learning_rate"], e_this, cfg["batch_size"],
                                  stage_seed(root, STAGE_CLASSIFIER, cycle)),
            optimizers=optimizers, extra_negatives=extra)
        executed_clf += e_this

        val_p1 = None
        if val_feats is not None:
            pred = predict_scores(clf, transform, index, val_feats.matrix,
                                  PredictConfig(cfg["beta"], k_sl, k_out))
            val_p1 = precision_at_k(pred, val_c, 1)

        cycle_log.append({
            "cycle": cycle,
            "encoder_epochs": cfg["e_label"],
            "classifier_epochs": e_this,
            "encoder_loss": enc_report.final_loss,
            "classifier_loss": clf_report.final_loss,
            "val_p1": val_p1,
        })
        line = (f"cycle {cycle}/{schedule.n_retrains}: encoder loss "
                f"{enc_report.final_loss:.6f}, classifier loss "
                f"{clf_report.final_loss:.6f}")
        if val_p1 is not None:
            line += f", val P@1 {val_p1:.4f}"
        emit(line)

        if val_p1 is not None and not math.isnan(val_p1) and val_p1 > best_p1:
            best_p1 = val_p1
            best = (cycle, encoder, transform.copy(), clf.copy(), index)

    if executed_clf != cfg["e_model"]:
        raise AssertionError(
            f"executed {executed_clf} classifier epochs, scheduled {cfg['e_model']}")
    if executed_enc != cfg["e_label"] * schedule.n_retrains:
        raise AssertionError("encoder epoch count does not match the schedule")

    if best is not None:
        best_cycle, encoder, transform, clf, index = best
        emit(f"best cycle: {best_cycle} (val P@1 {best_p1:.4f})")
    else:
        best_cycle = schedule.n_retrains

    meta = {
        "format": "labelsieve-bundle",
        "n_labels": corpus.n_labels,
        "n_features": corpus.n_features,
        "embed_dim": dim,
        "hidden_dim": hidden,
        "n_train_points": train_c.n_points,
        "n_val_points": val_c.n_points,
        "best_cycle": best_cycle,
        "classifier_epochs_run": executed_clf,
        "encoder_epochs_run": executed_enc,
    }
    return ModelBundle(table, encoder, transform, clf, index,
                       dict(cfg), cycle_log, meta)


def _bundle_arrays(bundle: ModelBundle) -> list[tuple[str, str, np.ndarray]]:
    enc = bundle.encoder
    idx = bundle.index
    arrays = [
        ("table", "<f8", bundle.table.rows),
        ("enc_w1", "<f8", enc.W1), ("enc_b1", "<f8", enc.b1),
        ("enc_w2", "<f8", enc.W2), ("enc_b2", "<f8", enc.b2),
        ("tr_wx", "<f8", bundle.transform.Wx), ("tr_bx", "<f8", bundle.transform.bx),
        ("clf_w", "<f8", bundle.clf.W), ("clf_bias", "<f8", bundle.clf.bias),
        ("idx_vectors", "<f8", idx.vectors), ("idx_zero", "|u1", idx.zero_mask),
    ]
    for layer, (nbrs, cnts) in enumerate(zip(idx.neighbors, idx.counts)):
        arrays.append((f"idx_nbrs_{layer}", "<i4", nbrs))
        arrays.append((f"idx_cnts_{layer}", "<i4", cnts))
    return arrays


def save_bundle(bundle: ModelBundle, path) -> None:
    arrays = [(name, dt, np.ascontiguousarray(arr, dtype=np.dtype(dt)))
              for name, dt, arr in _bundle_arrays(bundle)]
    header = {
        "arrays": [[name, dt, list(arr.shape)] for name, dt, arr in arrays],
        "config": bundle.config,
        "cycle_log": bundle.cycle_log,
        "meta": {**bundle.meta,
                 "index_entry": int(bundle.index.entry),
                 "index_layers": len(bundle.index.neighbors)},
    }
    hjson = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<II", _FORMAT_VERSION, len(hjson))
    buf += hjson
    for _, _, arr in arrays:
        buf += arr.tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(buf))


def load_bundle(path) -> ModelBundle:
    """Reverse of save_bundle.  Integrity first: the trailing CRC is verified
    over the raw bytes before any field is trusted."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise BundleFormatError(f"{path}: too short to be a bundle")
    (crc_stored,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc_stored:
        raise BundleChecksumError(f"{path}: checksum mismatch, file is corrupt")
    if raw[:4] != _MAGIC:
        raise BundleFormatError(f"{path}: bad magic, not a model bundle")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != _FORMAT_VERSION:
        raise BundleFormatError(f"{path}: unsupported bundle version {version}")
    if 12 + hlen > len(raw) - 4:
        raise BundleFormatError(f"{path}: header length exceeds file size")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"{path}: unreadable header: {exc}") from None

    off = 12 + hlen
    arrays: dict[str, np.ndarray] = {}
    for name, dts, shape in header["arrays"]:
        dt = np.dtype(dts)
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = off + count * dt.itemsize
        if end > len(raw) - 4:
            raise BundleFormatError(f"{path}: array {name} overruns the file")
        arrays[name] = np.frombuffer(raw, dtype=dt, count=count,
                                     offset=off).reshape(shape).copy()
        off = end
    if off != len(raw) - 4:
        raise BundleFormatError(f"{path}: trailing bytes after arrays")

    config = header["config"]
    meta = dict(header["meta"])
    n_layers = int(meta.pop("index_layers"))
    entry = int(meta.pop("index_entry"))
    index = AnnIndex(
        arrays["idx_vectors"], arrays["idx_zero"],
        [arrays[f"idx_nbrs_{l}"] for l in range(n_layers)],
        [arrays[f"idx_cnts_{l}"] for l in range(n_layers)],
        entry,
        HnswParams(int(config["hnsw_m"]), int(config["ef_construction"]),
                   int(config["ef_search"])),
    )
    return ModelBundle(
        table=EmbeddingTable(arrays["table"]),
        encoder=LabelEncoderParams(arrays["enc_w1"], arrays["enc_b1"],
                                   arrays["enc_w2"], arrays["enc_b2"]),
        transform=FeatureTransform(arrays["tr_wx"], arrays["tr_bx"]),
        clf=OvaClassifier(arrays["clf_w"], arrays["clf_bias"]),
        index=index,
        config=config,
        cycle_log=header["cycle_log"],
        meta=meta,
    )
