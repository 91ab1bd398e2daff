"""Deterministic per-stage random streams derived from one root seed.

Every random decision in the pipeline draws from a generator keyed by
(root seed, stage id, cycle), so stages cannot perturb each other's streams
and reordering work inside one stage never shifts another stage's draws.
"""

from __future__ import annotations

import numpy as np

STAGE_TABLE = 0       # random embedding table
STAGE_SPLIT = 1       # train/validation split
STAGE_ENCODER_INIT = 2
STAGE_ENCODER_BATCH = 3  # keyed by cycle
STAGE_INDEX = 4          # HNSW level draws, keyed by cycle
STAGE_CLASSIFIER = 5     # classifier batch shuffling, keyed by cycle
STAGE_RANDOM_NEGATIVES = 6  # keyed by cycle


def stage_rng(root_seed: int, *key: int) -> np.random.Generator:
    """Generator for one (stage, cycle...) slot under the root seed."""
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=tuple(key)))


def stage_seed(root_seed: int, *key: int) -> int:
    """Integer seed for the same slot, for components that take plain seeds."""
    seq = np.random.SeedSequence(root_seed, spawn_key=tuple(key))
    return int(seq.generate_state(1, dtype=np.uint32)[0])
