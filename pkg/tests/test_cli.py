"""End-to-end command-line behavior: exit codes, output files, precedence."""

import re

import numpy as np
import pytest

from labelsieve.cli import main

FAST = ["--override", "e_model=2", "--override", "e_label=1",
        "--override", "e_hat_label=2", "--override", "shortlist_k=15",
        "--override", "embed_dim=12"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A synthetic corpus plus a model trained on it, shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "corpus.txt"
    model = root / "model.bin"
    assert main(["synth", "--output", str(data), "--points", "150",
                 "--labels", "25", "--dim", "12", "--seed", "4"]) == 0
    assert main(["train", "--data", str(data), "--model", str(model),
                 "--seed", "1", *FAST]) == 0
    return root, data, model


class TestTrain:
    def test_echoes_config_and_schedule(self, workdir, tmp_path, capsys):
        _, data, _ = workdir
        out = tmp_path / "m.bin"
        rc = main(["train", "--data", str(data), "--model", str(out),
                   "--override", "e_model=16", "--override", "e_label=8",
                   "--override", "e_hat_label=8", "--override", "shortlist_k=15",
                   "--override", "embed_dim=8", "--override", "e_model=2"])
        text = capsys.readouterr().out
        assert rc == 0
        assert "effective config:" in text
        assert "  e_label=8" in text
        assert "  e_model=2" in text      # later override wins
        assert "total epochs: 10" in text  # 2 + 8 * (2 // 8 + 1)
        assert "train seconds:" in text
        assert out.exists()

    def test_seed_flag_beats_config_file(self, workdir, tmp_path, capsys):
        _, data, _ = workdir
        cfg = tmp_path / "c.cfg"
        cfg.write_text("seed=9\n")
        rc = main(["train", "--data", str(data), "--model",
                   str(tmp_path / "m.bin"), "--config", str(cfg),
                   "--seed", "3", *FAST])
        assert rc == 0
        assert "  seed=3" in capsys.readouterr().out

    def test_bad_override_exits_one(self, workdir, tmp_path, capsys):
        _, data, _ = workdir
        rc = main(["train", "--data", str(data), "--model",
                   str(tmp_path / "m.bin"), "--override", "betta=0.5"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_data_exits_one(self, tmp_path, capsys):
        rc = main(["train", "--data", str(tmp_path / "nope.txt"),
                   "--model", str(tmp_path / "m.bin")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestPredict:
    def test_writes_label_score_lines(self, workdir, tmp_path, capsys):
        _, data, model = workdir
        out = tmp_path / "preds.txt"
        rc = main(["predict", "--model", str(model), "--data", str(data),
                   "--output", str(out), "--topk", "3"])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 150
        for line in lines:
            assert re.fullmatch(r"(\d+:\d\.\d{6})( \d+:\d\.\d{6}){0,2}", line)
        assert "predict ms/point:" in capsys.readouterr().out

    def test_missing_bundle_exits_one(self, workdir, tmp_path, capsys):
        _, data, _ = workdir
        rc = main(["predict", "--model", str(tmp_path / "ghost.bin"),
                   "--data", str(data), "--output", str(tmp_path / "p.txt")])
        assert rc == 1
        assert "bundle not found" in capsys.readouterr().err

    def test_corrupt_bundle_exits_one(self, workdir, tmp_path, capsys):
        _, data, model = workdir
        bad = tmp_path / "bad.bin"
        raw = bytearray(model.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        bad.write_bytes(bytes(raw))
        rc = main(["predict", "--model", str(bad), "--data", str(data),
                   "--output", str(tmp_path / "p.txt")])
        assert rc == 1
        assert "checksum" in capsys.readouterr().err

    def test_invalid_topk_exits_one(self, workdir, tmp_path, capsys):
        _, data, model = workdir
        rc = main(["predict", "--model", str(model), "--data", str(data),
                   "--output", str(tmp_path / "p.txt"), "--topk", "0"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestEvaluate:
    def test_prints_report_and_writes_files(self, workdir, tmp_path, capsys):
        _, data, model = workdir
        report = tmp_path / "report.txt"
        csv = tmp_path / "report.csv"
        rc = main(["evaluate", "--model", str(model), "--data", str(data),
                   "--report", str(report), "--csv", str(csv)])
        text = capsys.readouterr().out
        assert rc == 0
        assert "points evaluated" in text
        assert "P@1" in text and "PSP@5" in text
        assert "predict ms/point:" in text

        saved = report.read_text()
        assert saved in text                      # same table, minus timing
        assert "ms/point" not in saved
        assert csv.read_text().startswith("p_at_1,")

    def test_train_data_flag_changes_propensities(self, workdir, tmp_path, capsys):
        root, data, model = workdir
        skew = tmp_path / "skew.txt"
        main(["synth", "--output", str(skew), "--points", "150", "--labels",
              "25", "--dim", "12", "--seed", "11", "--zipf", "2.0"])
        main(["evaluate", "--model", str(model), "--data", str(data)])
        base = capsys.readouterr().out
        main(["evaluate", "--model", str(model), "--data", str(data),
              "--train-data", str(skew)])
        alt = capsys.readouterr().out

        def psp1(text):
            return next(l for l in text.splitlines() if l.startswith("PSP@1"))

        def p1(text):
            return next(l for l in text.splitlines() if l.startswith("P@1"))

        assert p1(base) == p1(alt)       # P@k ignores propensities
        assert psp1(base) != psp1(alt)

    def test_all_points_unlabeled_exits_one(self, workdir, tmp_path, capsys):
        _, _, model = workdir
        hollow = tmp_path / "hollow.txt"
        hollow.write_text("2 12 25\n 0:1.0\n 1:1.0\n")
        rc = main(["evaluate", "--model", str(model), "--data", str(hollow)])
        assert rc == 1
        assert "points evaluated 0" in capsys.readouterr().out


class TestOtherCommands:
    def test_inspect_summarizes(self, workdir, capsys):
        _, data, _ = workdir
        assert main(["inspect", "--data", str(data)]) == 0
        text = capsys.readouterr().out
        assert "points 150  features 12  labels 25" in text
        assert "most frequent labels" in text

    def test_sweep_table_and_csv(self, workdir, tmp_path, capsys):
        _, data, model = workdir
        csv = tmp_path / "sweep.csv"
        rc = main(["sweep", "--model", str(model), "--data", str(data),
                   "--values", "0,1", "--csv", str(csv)])
        text = capsys.readouterr().out
        assert rc == 0
        assert "beta" in text and "PSP@1" in text
        rows = csv.read_text().splitlines()
        assert rows[0] == "beta,p_at_1,psp_at_1"
        assert len(rows) == 3

    def test_synth_reports_shape(self, tmp_path, capsys):
        out = tmp_path / "c.txt"
        rc = main(["synth", "--output", str(out), "--points", "30",
                   "--labels", "8", "--dim", "6"])
        assert rc == 0
        assert "wrote 30 points, 8 labels, 6 features" in capsys.readouterr().out
        header = out.read_text().splitlines()[0]
        assert header == "30 6 8"


class TestParser:
    def test_unknown_flag_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data", "x", "--model", "y", "--frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data", "x"])
        assert exc.value.code == 2

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "labelsieve" in capsys.readouterr().out

    def test_deterministic_flag_accepted_everywhere(self, workdir, tmp_path, capsys):
        _, data, model = workdir
        rc = main(["evaluate", "--model", str(model), "--data", str(data),
                   "--deterministic"])
        assert rc == 0
