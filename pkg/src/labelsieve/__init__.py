"""labelsieve: extreme multi-label classification with label-embedding shortlists.

Trains a label encoder that embeds labels into the feature space, shortlists
hard negative labels per data point with an HNSW index, and fits sparse
one-vs-all classifiers on positives plus shortlisted negatives, cycling
between the three stages so shortlists stay valid as features drift.
Prediction ensembles classifier logits with shortlist cosine scores.
"""

from labelsieve.dataset import Corpus, LabelStats, SparseVector, parse_corpus
from labelsieve.trainer import ModelBundle, load_bundle, run_training, save_bundle

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "LabelStats",
    "SparseVector",
    "ModelBundle",
    "parse_corpus",
    "run_training",
    "save_bundle",
    "load_bundle",
    "__version__",
]
