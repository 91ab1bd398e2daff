"""Training schedule, full pipeline runs, and bundle serialization."""

import struct
import zlib

import numpy as np
import pytest

from labelsieve.dataset import generate_synthetic
from labelsieve.errors import BundleChecksumError, BundleFormatError
from labelsieve.features import random_table
from labelsieve.inference import PredictConfig, predict_scores
from labelsieve.trainer import (
    TrainSchedule,
    load_bundle,
    run_training,
    save_bundle,
    total_epochs,
)


class TestSchedule:
    @pytest.mark.parametrize("e_model,e_hat,expect", [
        (16, 8, 3),
        (21, 4, 6),
        (21, 6, 4),
        (21, 9, 3),
        (5, 2, 3),
        (4, 2, 3),   # divides evenly, trailing zero-epoch cycle
        (1, 8, 1),
        (0, 8, 1),   # no classifier epochs still builds one model
    ])
    def test_n_retrains(self, e_model, e_hat, expect):
        assert TrainSchedule(e_model, 8, e_hat).n_retrains == expect

    @pytest.mark.parametrize("e_model,e_label,e_hat,expect", [
        (16, 8, 8, 40),
        (21, 4, 4, 45),
        (21, 8, 6, 53),
        (21, 6, 9, 39),
    ])
    def test_total_epochs(self, e_model, e_label, e_hat, expect):
        assert total_epochs(TrainSchedule(e_model, e_label, e_hat)) == expect

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            TrainSchedule(-1, 8, 8)
        with pytest.raises(ValueError):
            TrainSchedule(8, -1, 8)

    def test_zero_chunk_only_valid_without_classifier_epochs(self):
        with pytest.raises(ValueError):
            TrainSchedule(8, 8, 0)
        assert TrainSchedule(0, 8, 0).n_retrains == 1


def _quick_corpus():
    corpus, _ = generate_synthetic(80, 15, 12, 8, seed=7)
    return corpus


def _quick_config(**over):
    cfg = {
        "e_model": 5, "e_label": 1, "e_hat_label": 2,
        "shortlist_k": 10, "embed_dim": 12, "k_output": 3,
        "encoder_batch_size": 64, "seed": 2,
    }
    cfg.update(over)
    return cfg


class TestRunTraining:
    def test_epoch_counters_decompose(self):
        corpus = _quick_corpus()
        table = random_table(corpus.n_features, 12, 5)
        bundle = run_training(corpus, _quick_config(), table)

        chunks = [c["classifier_epochs"] for c in bundle.cycle_log]
        assert chunks == [2, 2, 1]
        assert sum(chunks) == 5
        assert all(c["encoder_epochs"] == 1 for c in bundle.cycle_log)
        assert bundle.meta["classifier_epochs_run"] == 5
        assert bundle.meta["encoder_epochs_run"] == 3

    def test_even_division_appends_zero_epoch_cycle(self):
        corpus = _quick_corpus()
        table = random_table(corpus.n_features, 12, 5)
        bundle = run_training(corpus, _quick_config(e_model=4), table)
        chunks = [c["classifier_epochs"] for c in bundle.cycle_log]
        assert chunks == [2, 2, 0]

    def test_log_lines_and_cycle_records(self):
        corpus = _quick_corpus()
        table = random_table(corpus.n_features, 12, 5)
        lines = []
        bundle = run_training(corpus, _quick_config(), table, log=lines.append)

        assert lines[0] == "total epochs: 8"  # 5 + 1*3
        assert len(bundle.cycle_log) == 3
        for i, rec in enumerate(bundle.cycle_log):
            assert rec["cycle"] == i + 1
            assert np.isfinite(rec["encoder_loss"])
            assert np.isfinite(rec["classifier_loss"])
            assert 0.0 <= rec["val_p1"] <= 1.0

    def test_best_cycle_matches_max_validation_score(self):
        corpus = _quick_corpus()
        table = random_table(corpus.n_features, 12, 5)
        bundle = run_training(corpus, _quick_config(), table)
        scores = [c["val_p1"] for c in bundle.cycle_log]
        # earliest cycle achieving the max is kept
        assert bundle.meta["best_cycle"] == int(np.argmax(scores)) + 1

    def test_no_validation_keeps_final_state(self):
        corpus = _quick_corpus()
        table = random_table(corpus.n_features, 12, 5)
        bundle = run_training(
            corpus, _quick_config(validation_fraction=0.0), table)
        assert all(c["val_p1"] is None for c in bundle.cycle_log)
        assert bundle.meta["best_cycle"] == len(bundle.cycle_log)
        assert bundle.meta["n_val_points"] == 0

    def test_meta_describes_problem_shape(self):
        corpus = _quick_corpus()
        table = random_table(corpus.n_features, 12, 5)
        bundle = run_training(corpus, _quick_config(), table)
        assert bundle.meta["n_labels"] == corpus.n_labels
        assert bundle.meta["n_features"] == corpus.n_features
        assert bundle.meta["embed_dim"] == 12
        assert (bundle.meta["n_train_points"] + bundle.meta["n_val_points"]
                == corpus.n_points)

    def test_empty_corpus_rejected(self):
        from labelsieve.dataset import Corpus
        table = random_table(4, 4, 0)
        with pytest.raises(ValueError, match="empty"):
            run_training(Corpus(4, 4, []), _quick_config(), table)

    def test_deterministic_given_seed(self, tmp_path):
        corpus = _quick_corpus()
        table = random_table(corpus.n_features, 12, 5)
        a = run_training(corpus, _quick_config(), table)
        b = run_training(corpus, _quick_config(), table)
        save_bundle(a, tmp_path / "a.bin")
        save_bundle(b, tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


class TestBundleIO:
    def test_round_trip_is_byte_stable(self, small_bundle, tmp_path):
        p1 = tmp_path / "one.bin"
        p2 = tmp_path / "two.bin"
        save_bundle(small_bundle, p1)
        save_bundle(load_bundle(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_loaded_fields_match(self, small_bundle, tmp_path):
        path = tmp_path / "m.bin"
        save_bundle(small_bundle, path)
        back = load_bundle(path)

        assert np.array_equal(back.table.rows, small_bundle.table.rows)
        assert np.array_equal(back.clf.W, small_bundle.clf.W)
        assert np.array_equal(back.clf.bias, small_bundle.clf.bias)
        assert np.array_equal(back.transform.Wx, small_bundle.transform.Wx)
        assert np.array_equal(back.index.vectors, small_bundle.index.vectors)
        assert back.index.entry == small_bundle.index.entry
        assert len(back.index.neighbors) == len(small_bundle.index.neighbors)
        assert back.config == small_bundle.config
        assert back.cycle_log == small_bundle.cycle_log
        assert back.meta == small_bundle.meta

    def test_loaded_bundle_predicts_identically(self, small_bundle, tmp_path):
        path = tmp_path / "m.bin"
        save_bundle(small_bundle, path)
        back = load_bundle(path)

        rng = np.random.default_rng(0)
        queries = rng.normal(size=(6, small_bundle.meta["embed_dim"]))
        cfg = PredictConfig(0.6, 10, 3)
        a = predict_scores(small_bundle.clf, small_bundle.transform,
                           small_bundle.index, queries, cfg)
        b = predict_scores(back.clf, back.transform, back.index, queries, cfg)
        assert np.array_equal(a.ids, b.ids)
        assert np.array_equal(a.scores, b.scores)

    def test_flipped_byte_fails_checksum(self, small_bundle, tmp_path):
        path = tmp_path / "m.bin"
        save_bundle(small_bundle, path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(BundleChecksumError):
            load_bundle(path)

    def test_every_region_is_covered_by_the_checksum(self, small_bundle, tmp_path):
        path = tmp_path / "m.bin"
        save_bundle(small_bundle, path)
        raw = path.read_bytes()
        # probe one byte in each structural region: magic, version, header,
        # array payload, trailer
        for pos in [0, 5, 20, len(raw) - 8, len(raw) - 1]:
            bad = bytearray(raw)
            bad[pos] ^= 0x01
            path.write_bytes(bytes(bad))
            with pytest.raises(BundleChecksumError):
                load_bundle(path)

    def test_truncated_file_rejected(self, small_bundle, tmp_path):
        path = tmp_path / "m.bin"
        save_bundle(small_bundle, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises((BundleChecksumError, BundleFormatError)):
            load_bundle(path)

    def test_tiny_file_rejected(self, tmp_path):
        path = tmp_path / "m.bin"
        path.write_bytes(b"LSBL123")
        with pytest.raises(BundleFormatError, match="too short"):
            load_bundle(path)

    def _reseal(self, raw: bytes) -> bytes:
        # recompute the trailer so only the structural error can fire
        body = raw[:-4]
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    def test_bad_magic_detected_after_checksum(self, small_bundle, tmp_path):
        path = tmp_path / "m.bin"
        save_bundle(small_bundle, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(self._reseal(bytes(raw)))
        with pytest.raises(BundleFormatError, match="magic"):
            load_bundle(path)

    def test_unknown_version_rejected(self, small_bundle, tmp_path):
        path = tmp_path / "m.bin"
        save_bundle(small_bundle, path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 99)
        path.write_bytes(self._reseal(bytes(raw)))
        with pytest.raises(BundleFormatError, match="version"):
            load_bundle(path)

    def test_header_overrun_rejected(self, small_bundle, tmp_path):
        path = tmp_path / "m.bin"
        save_bundle(small_bundle, path)
        raw = bytearray(path.read_bytes())
        raw[8:12] = struct.pack("<I", 2 ** 31)
        path.write_bytes(self._reseal(bytes(raw)))
        with pytest.raises(BundleFormatError, match="header"):
            load_bundle(path)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_bundle(tmp_path / "nowhere.bin")
