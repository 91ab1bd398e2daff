"""Shared fixtures: small corpora and a cheaply trained model bundle."""

from __future__ import annotations

import numpy as np
import pytest

from labelsieve.config import DEFAULTS
from labelsieve.dataset import generate_synthetic, parse_corpus
from labelsieve.features import identity_table, random_table
from labelsieve.seeding import STAGE_TABLE, stage_rng
from labelsieve.trainer import run_training

TINY_TEXT = (
    "4 6 5\n"
    "0,2 0:1.0 3:0.5\n"
    "1 1:2.0\n"
    " 2:0.25 4:0.75\n"
    "3,4 0:0.1 5:1.5\n"
)


@pytest.fixture
def tiny_corpus():
    return parse_corpus(TINY_TEXT)


@pytest.fixture(scope="session")
def small_synth():
    """300 points over 40 labels in 16 dims; separable, light noise."""
    corpus, planted = generate_synthetic(300, 40, 16, 16, seed=3)
    return corpus, planted


@pytest.fixture(scope="session")
def small_config():
    cfg = dict(DEFAULTS)
    cfg.update(e_model=4, e_label=2, e_hat_label=2, shortlist_k=20,
               embed_dim=24, seed=0)
    return cfg


@pytest.fixture(scope="session")
def small_bundle(small_synth, small_config):
    corpus, _ = small_synth
    table = random_table(corpus.n_features, small_config["embed_dim"],
                         stage_rng(small_config["seed"], STAGE_TABLE))
    return run_training(corpus, small_config, table)


@pytest.fixture(scope="session")
def trained_fixture():
    """The separable fixture trained well enough for metric-level tests."""
    corpus, _ = generate_synthetic(600, 50, 16, 16, seed=1)
    cfg = dict(DEFAULTS)
    cfg.update(e_model=8, e_label=4, e_hat_label=4, shortlist_k=30,
               embed_dim=16, seed=0)
    table = identity_table(corpus.n_features, cfg["embed_dim"])
    bundle = run_training(corpus, cfg, table)
    return corpus, cfg, bundle


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)
