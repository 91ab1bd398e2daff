"""Flat key=value configuration with override precedence.

Precedence: command-line overrides beat the config file, which beats the
built-in defaults.  Values are typed per key; unknown keys are rejected so
typos fail loudly instead of silently training with defaults.
"""

from __future__ import annotations

from pathlib import Path

from labelsieve.errors import ConfigError

# hidden_dim 0 means "match the embedding dimension"; ef_search 0 means
# "max(100, 4k)".  validation_fraction drives the train/validation split
# used for checkpoint selection.
DEFAULTS: dict = {
    "beta": 0.75,
    "shortlist_k": 500,
    "learning_rate": 0.006,
    "e_model": 16,
    "e_label": 8,
    "e_hat_label": 8,
    "hidden_dim": 0,
    "hnsw_m": 16,
    "ef_construction": 200,
    "ef_search": 0,
    "seed": 0,
    "normalize_features": True,
    "random_negatives": 0,
    "k_output": 5,
    "embed_dim": 64,
    "batch_size": 8,
    "encoder_batch_size": 1024,
    "validation_fraction": 0.1,
    "propensity_a": 0.55,
    "propensity_b": 1.5,
}

_INT_KEYS = {"shortlist_k", "e_model", "e_label", "e_hat_label", "hidden_dim",
             "hnsw_m", "ef_construction", "ef_search", "seed",
             "random_negatives", "k_output", "embed_dim", "batch_size",
             "encoder_batch_size"}
_FLOAT_KEYS = {"beta", "learning_rate", "validation_fraction",
               "propensity_a", "propensity_b"}
_BOOL_KEYS = {"normalize_features"}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"bad boolean for {key}: {raw!r}")
    raise ConfigError(f"unknown config key: {key!r}")


def load_config(path) -> dict:
    """Parse a key=value file ('#' comments, blank lines allowed)."""
    cfg: dict = {}
    text = Path(path).read_text()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {line_no}: unknown config key: {key!r}")
        cfg[key] = _parse_value(key, raw)
    return cfg


def apply_overrides(cfg: dict, overrides) -> dict:
    out = dict(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key!r}")
        out[key] = _parse_value(key, raw)
    return out


def resolve_config(file_path=None, overrides=None) -> dict:
    cfg = dict(DEFAULTS)
    if file_path is not None:
        cfg.update(load_config(file_path))
    cfg = apply_overrides(cfg, overrides)
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    def bad(msg):
        raise ConfigError(msg)

    c = dict(cfg)
    if not 0.0 <= c["beta"] <= 1.0:
        bad(f"beta must be in [0, 1], got {c['beta']}")
    if c["learning_rate"] <= 0:
        bad(f"learning_rate must be > 0, got {c['learning_rate']}")
    if c["shortlist_k"] < 1:
        bad(f"shortlist_k must be >= 1, got {c['shortlist_k']}")
    if c["e_model"] < 0 or c["e_label"] < 0:
        bad("epoch counts must be >= 0")
    if c["e_model"] > 0 and c["e_hat_label"] < 1:
        bad("e_hat_label must be >= 1 when e_model > 0")
    if c["hidden_dim"] < 0:
        bad(f"hidden_dim must be >= 0 (0 = embedding dim), got {c['hidden_dim']}")
    if c["hnsw_m"] < 2:
        bad(f"hnsw_m must be >= 2, got {c['hnsw_m']}")
    if c["ef_construction"] < 1:
        bad(f"ef_construction must be >= 1, got {c['ef_construction']}")
    if c["ef_search"] < 0:
        bad(f"ef_search must be >= 0 (0 = auto), got {c['ef_search']}")
    if c["random_negatives"] < 0:
        bad(f"random_negatives must be >= 0, got {c['random_negatives']}")
    if c["k_output"] < 1:
        bad(f"k_output must be >= 1, got {c['k_output']}")
    if c["k_output"] > c["shortlist_k"]:
        bad("k_output cannot exceed shortlist_k")
    if c["embed_dim"] < 1:
        bad(f"embed_dim must be >= 1, got {c['embed_dim']}")
    if c["batch_size"] < 1 or c["encoder_batch_size"] < 1:
        bad("batch sizes must be >= 1")
    if not 0.0 <= c["validation_fraction"] < 1.0:
        bad(f"validation_fraction must be in [0, 1), got {c['validation_fraction']}")
    if c["propensity_a"] <= 0 or c["propensity_b"] <= 0:
        bad("propensity constants must be > 0")
    return c


def format_config(cfg: dict) -> str:
    """Deterministic echo of the effective configuration."""
    lines = [f"{key}={cfg[key]}" for key in DEFAULTS]
    return "\n".join(lines) + "\n"
