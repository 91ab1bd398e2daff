"""Config file parsing, override precedence, and validation."""

import pytest

from labelsieve.config import (
    DEFAULTS,
    apply_overrides,
    format_config,
    load_config,
    resolve_config,
    validate_config,
)
from labelsieve.errors import ConfigError


class TestLoad:
    def test_comments_and_blank_lines(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text(
            "# training\nbeta = 0.5\n\nshortlist_k=100  # trailing comment\n")
        assert load_config(f) == {"beta": 0.5, "shortlist_k": 100}

    def test_typed_per_key(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("e_model=21\nlearning_rate=0.007\nnormalize_features=off\n")
        cfg = load_config(f)
        assert cfg["e_model"] == 21 and isinstance(cfg["e_model"], int)
        assert cfg["learning_rate"] == 0.007
        assert cfg["normalize_features"] is False

    @pytest.mark.parametrize("word,value", [
        ("true", True), ("1", True), ("YES", True), ("on", True),
        ("false", False), ("0", False), ("No", False), ("off", False),
    ])
    def test_boolean_spellings(self, tmp_path, word, value):
        f = tmp_path / "c.cfg"
        f.write_text(f"normalize_features={word}\n")
        assert load_config(f)["normalize_features"] is value

    def test_unknown_key_reports_line(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("beta=0.5\nshortcut_k=10\n")
        with pytest.raises(ConfigError, match="line 2.*shortcut_k"):
            load_config(f)

    def test_missing_equals_reports_line(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("beta 0.5\n")
        with pytest.raises(ConfigError, match="line 1"):
            load_config(f)

    def test_bad_int_value(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("e_model=three\n")
        with pytest.raises(ConfigError, match="e_model"):
            load_config(f)


class TestPrecedence:
    def test_overrides_beat_file_beats_defaults(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("beta=0.5\nshortlist_k=100\n")
        cfg = resolve_config(f, ["beta=0.25"])
        assert cfg["beta"] == 0.25          # override wins
        assert cfg["shortlist_k"] == 100    # file wins over default
        assert cfg["e_model"] == DEFAULTS["e_model"]

    def test_no_file_uses_defaults(self):
        cfg = resolve_config(None, None)
        assert cfg == DEFAULTS

    def test_override_syntax_checked(self):
        with pytest.raises(ConfigError, match="key=value"):
            apply_overrides({}, ["beta"])
        with pytest.raises(ConfigError, match="unknown"):
            apply_overrides({}, ["betta=0.5"])

    def test_apply_overrides_does_not_mutate(self):
        base = {"beta": 0.75}
        out = apply_overrides(base, ["beta=0.1"])
        assert base["beta"] == 0.75 and out["beta"] == 0.1


class TestValidate:
    def test_defaults_are_valid(self):
        assert validate_config(dict(DEFAULTS)) == DEFAULTS

    @pytest.mark.parametrize("key,value,pattern", [
        ("beta", 1.5, "beta"),
        ("learning_rate", 0.0, "learning_rate"),
        ("shortlist_k", 0, "shortlist_k"),
        ("e_model", -1, "epoch"),
        ("e_hat_label", 0, "e_hat_label"),
        ("hnsw_m", 1, "hnsw_m"),
        ("ef_construction", 0, "ef_construction"),
        ("ef_search", -1, "ef_search"),
        ("random_negatives", -2, "random_negatives"),
        ("k_output", 0, "k_output"),
        ("k_output", 501, "k_output"),
        ("embed_dim", 0, "embed_dim"),
        ("batch_size", 0, "batch"),
        ("validation_fraction", 1.0, "validation_fraction"),
        ("propensity_a", 0.0, "propensity"),
    ])
    def test_out_of_range_rejected(self, key, value, pattern):
        cfg = dict(DEFAULTS)
        cfg[key] = value
        with pytest.raises(ConfigError, match=pattern):
            validate_config(cfg)

    def test_zero_epochs_allowed_with_zero_chunk(self):
        cfg = dict(DEFAULTS)
        cfg.update(e_model=0, e_hat_label=0)
        validate_config(cfg)


class TestFormat:
    def test_round_trips_through_load(self, tmp_path):
        cfg = dict(DEFAULTS)
        cfg.update(beta=0.25, e_model=21, normalize_features=False)
        f = tmp_path / "echo.cfg"
        f.write_text(format_config(cfg))
        assert resolve_config(f, None) == cfg

    def test_covers_every_key_in_stable_order(self):
        lines = format_config(DEFAULTS).strip().splitlines()
        assert [l.split("=")[0] for l in lines] == list(DEFAULTS)
