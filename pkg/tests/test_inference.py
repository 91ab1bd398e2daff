"""Ensemble scoring: beta mixing, tie handling, shortlist exclusion, output."""

import io

import numpy as np
import pytest

from labelsieve.classifier import (
    FeatureTransform,
    OvaClassifier,
    identity_transform,
    init_classifier,
    stable_sigmoid,
)
from labelsieve.inference import (
    PredictConfig,
    Prediction,
    predict,
    predict_batch,
    predict_scores,
    write_predictions,
)
from labelsieve.shortlist import HnswParams, build_index


def _exact_index(label_emb):
    # ef large enough that the graph search is exhaustive
    params = HnswParams(8, 100, 10 * len(label_emb))
    return build_index(np.asarray(label_emb, dtype=np.float64), params, seed=0)


class TestConfig:
    @pytest.mark.parametrize("beta", [-0.1, 1.5, np.nan])
    def test_beta_range(self, beta):
        with pytest.raises(ValueError):
            PredictConfig(beta, 10, 5)

    def test_k_output_cannot_exceed_shortlist(self):
        with pytest.raises(ValueError):
            PredictConfig(0.5, 5, 6)
        PredictConfig(0.5, 5, 5)

    def test_positive_k(self):
        with pytest.raises(ValueError):
            PredictConfig(0.5, 10, 0)


class TestMixing:
    def test_known_mixture_value(self):
        # logit 0 and cosine 1 at beta 0.75: 0.375 + 0.25 * sigmoid(1)
        emb = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        index = _exact_index(emb)
        clf = init_classifier(4, 2)  # zero weights, zero logits
        pred = predict_scores(clf, identity_transform(2), index,
                              np.array([[2.0, 0.0]]),
                              PredictConfig(0.75, 4, 4))
        scores = dict(pred.row(0))
        assert scores[0] == pytest.approx(0.5577646446575012, abs=1e-12)

    def test_beta_one_is_classifier_only(self):
        rng = np.random.default_rng(3)
        emb = rng.normal(size=(6, 3))
        index = _exact_index(emb)
        w = rng.normal(size=(6, 3))
        bias = rng.normal(size=6)
        clf = OvaClassifier(w, bias)
        # positive queries pass through the transform's clamp unchanged
        x = rng.uniform(0.1, 1.0, size=(4, 3))

        pred = predict_scores(clf, identity_transform(3), index, x,
                              PredictConfig(1.0, 6, 6))
        for i in range(4):
            logits = w @ x[i] + bias
            want = np.lexsort((np.arange(6), -stable_sigmoid(logits)))
            assert np.array_equal(pred.ids[i], want)
            assert pred.scores[i] == pytest.approx(
                stable_sigmoid(logits)[want], abs=1e-15)

    def test_beta_zero_is_shortlist_only(self):
        rng = np.random.default_rng(4)
        emb = rng.normal(size=(6, 3))
        index = _exact_index(emb)
        clf = OvaClassifier(rng.normal(size=(6, 3)), rng.normal(size=6))
        x = rng.uniform(0.1, 1.0, size=(4, 3))

        pred = predict_scores(clf, identity_transform(3), index, x,
                              PredictConfig(0.0, 6, 6))
        unit = emb / np.linalg.norm(emb, axis=1, keepdims=True)
        for i in range(4):
            cos = unit @ (x[i] / np.linalg.norm(x[i]))
            want = np.lexsort((np.arange(6), -stable_sigmoid(cos)))
            assert np.array_equal(pred.ids[i], want)

    def test_ties_break_to_lower_label(self):
        # identical embeddings and zero classifier: every label scores the same
        emb = np.tile([[1.0, 0.0]], (5, 1))
        index = _exact_index(emb)
        clf = init_classifier(5, 2)
        pred = predict_scores(clf, identity_transform(2), index,
                              np.array([[3.0, 0.0]]),
                              PredictConfig(0.5, 5, 5))
        assert np.array_equal(pred.ids[0], [0, 1, 2, 3, 4])
        assert len(set(pred.scores[0])) == 1

    def test_labels_outside_shortlist_are_excluded(self):
        # label 3 sits opposite the query so a k=2 shortlist skips it; a huge
        # classifier weight on it must not resurrect it
        emb = np.array([[1.0, 0.0], [0.9, 0.1], [0.8, 0.2], [-1.0, 0.0]])
        index = _exact_index(emb)
        w = np.zeros((4, 2))
        w[3] = [1e6, 1e6]
        clf = OvaClassifier(w, np.zeros(4))
        pred = predict_scores(clf, identity_transform(2), index,
                              np.array([[1.0, 0.05]]),
                              PredictConfig(1.0, 2, 2))
        assert 3 not in pred.ids[0]

    def test_scores_descend_within_rows(self):
        rng = np.random.default_rng(5)
        emb = rng.normal(size=(20, 4))
        index = _exact_index(emb)
        clf = OvaClassifier(rng.normal(size=(20, 4)), rng.normal(size=20))
        pred = predict_scores(clf, identity_transform(4), index,
                              rng.normal(size=(8, 4)),
                              PredictConfig(0.6, 10, 10))
        assert np.all(np.diff(pred.scores, axis=1) <= 1e-15)

    def test_transform_is_applied_before_scoring(self):
        # the transform swaps axes, so the query lands on label 1's direction
        emb = np.array([[1.0, 0.0], [0.0, 1.0]])
        index = _exact_index(emb)
        clf = init_classifier(2, 2)
        swap = FeatureTransform(np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros(2))
        pred = predict_scores(clf, swap, index, np.array([[0.0, 1.0]]),
                              PredictConfig(0.0, 2, 2))
        assert pred.ids[0, 0] == 0
        pred = predict_scores(clf, identity_transform(2), index,
                              np.array([[0.0, 1.0]]), PredictConfig(0.0, 2, 2))
        assert pred.ids[0, 0] == 1


class TestWrappers:
    def test_single_point_matches_batch_row(self, small_bundle):
        dim = small_bundle.meta["embed_dim"]
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, dim))
        cfg = PredictConfig(0.75, 10, 4)
        batch = predict_scores(small_bundle.clf, small_bundle.transform,
                               small_bundle.index, x, cfg)
        single = predict(small_bundle, x[1], cfg)
        # matmul over a different batch shape may differ in the last ulp
        assert [l for l, _ in single] == [l for l, _ in batch.row(1)]
        np.testing.assert_allclose([s for _, s in single],
                                   [s for _, s in batch.row(1)], rtol=1e-12)

    def test_batch_embeds_through_bundle_table(self, small_bundle, small_synth):
        from labelsieve.features import embed_points

        corpus, _ = small_synth
        cfg = PredictConfig(0.75, 10, 4)
        via_corpus = predict_batch(small_bundle, corpus, cfg)
        feats = embed_points(corpus, small_bundle.table,
                             bool(small_bundle.config["normalize_features"]))
        direct = predict_scores(small_bundle.clf, small_bundle.transform,
                                small_bundle.index, feats.matrix, cfg)
        assert np.array_equal(via_corpus.ids, direct.ids)
        assert np.array_equal(via_corpus.scores, direct.scores)

    def test_row_drops_padding(self):
        pred = Prediction(np.array([[2, -1, -1]], dtype=np.int32),
                          np.array([[0.5, np.nan, np.nan]]))
        assert pred.row(0) == [(2, 0.5)]


class TestOutput:
    def test_line_format(self):
        pred = Prediction(np.array([[3, 1], [0, -1]], dtype=np.int32),
                          np.array([[0.875, 0.25], [1.0, np.nan]]))
        buf = io.StringIO()
        write_predictions(pred, buf)
        assert buf.getvalue() == "3:0.875000 1:0.250000\n0:1.000000\n"

    def test_writes_to_path(self, tmp_path):
        pred = Prediction(np.array([[0]], dtype=np.int32), np.array([[0.5]]))
        out = tmp_path / "preds.txt"
        write_predictions(pred, out)
        assert out.read_text() == "0:0.500000\n"
