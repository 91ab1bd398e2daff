"""Ranking metrics: P@k and propensity-scored PSP@k, plus report formatting.

Propensity of label l with training frequency N_l over N points:

    p_l = 1 / (1 + C * (N_l + B)^(-A)),   C = (ln N - 1) * (B + 1)^A

p_l is the assumed probability that a truly relevant label was actually
observed; 1/p_l up-weights rare labels.  PSP@k divides each point's observed
inverse-propensity mass in its top-k by the best mass any ranking could get,
so values stay in [0, 1].  Points with no positive labels are skipped in both
metrics and counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from labelsieve.dataset import Corpus, LabelStats
from labelsieve.inference import Prediction, PredictConfig, predict_batch


def _truth_rows(truth) -> list[np.ndarray]:
    if isinstance(truth, Corpus):
        return [pt.positives for pt in truth.points]
    return [np.asarray(t, dtype=np.int64) for t in truth]


def _pred_rows(pred) -> np.ndarray:
    return pred.ids if isinstance(pred, Prediction) else np.asarray(pred)


def precision_at_k(pred, truth, k: int) -> float:
    """Mean over points with positives of |top-k intersect positives| / k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rows = _pred_rows(pred)
    hits = []
    for ids, pos in zip(rows, _truth_rows(truth)):
        if len(pos) == 0:
            continue
        top = ids[:k]
        top = top[top >= 0]
        hits.append(len(np.intersect1d(top, pos)) / k)
    return float(np.mean(hits)) if hits else float("nan")


@dataclass(frozen=True)
class PropensityModel:
    a: float
    b: float
    p: np.ndarray  # (L,) in (0, 1]


def propensities(stats: LabelStats, a: float = 0.55, b: float = 1.5) -> PropensityModel:
    """Per-label propensities from training-frequency counts.

    For tiny corpora (N <= e) the constant C is non-positive and the model
    degenerates; propensities clamp to 1 there so weights stay well-defined.
    """
    if stats.n_points < 1:
        raise ValueError("propensities need at least one point")
    if a <= 0 or b <= 0:
        raise ValueError(f"A and B must be positive, got A={a} B={b}")
    c = (math.log(stats.n_points) - 1.0) * (b + 1.0) ** a
    if c <= 0:
        p = np.ones(len(stats.frequency))
    else:
        p = 1.0 / (1.0 + c * (stats.frequency + b) ** (-a))
    return PropensityModel(a, b, p)


def psp_at_k(pred, truth, prop: PropensityModel, k: int) -> float:
    """Propensity-scored precision, normalized by the ideal ranking.

    Numerator: sum of 1/p_l over true positives in the top-k.  Denominator:
    the same sum for the best possible top-k, i.e. the point's positives
    ranked by descending 1/p_l (ties toward the lower label).  Mean over
    points with positives.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if np.any(prop.p <= 0):
        raise ValueError("propensities must be positive")
    inv = 1.0 / prop.p
    vals = []
    for ids, pos in zip(_pred_rows(pred), _truth_rows(truth)):
        if len(pos) == 0:
            continue
        top = ids[:k]
        top = top[top >= 0]
        got = float(np.sum(inv[np.intersect1d(top, pos)]))
        ideal_order = np.lexsort((pos, prop.p[pos]))[:min(k, len(pos))]
        best = float(np.sum(inv[pos[ideal_order]]))
        vals.append(got / best)
    return float(np.mean(vals)) if vals else float("nan")


@dataclass
class MetricReport:
    p1: float
    p3: float
    p5: float
    psp1: float
    psp3: float
    psp5: float
    n_evaluated: int
    n_skipped: int
    train_seconds: float | None = None
    predict_ms_per_point: float | None = None

    def values(self) -> dict[str, float]:
        return {"P@1": self.p1, "P@3": self.p3, "P@5": self.p5,
                "PSP@1": self.psp1, "PSP@3": self.psp3, "PSP@5": self.psp5}

    def has_nan(self) -> bool:
        return any(math.isnan(v) for v in self.values().values())


def compute_report(pred, truth, prop: PropensityModel) -> MetricReport:
    rows = _truth_rows(truth)
    skipped = sum(1 for pos in rows if len(pos) == 0)
    return MetricReport(
        p1=precision_at_k(pred, truth, 1),
        p3=precision_at_k(pred, truth, 3),
        p5=precision_at_k(pred, truth, 5),
        psp1=psp_at_k(pred, truth, prop, 1),
        psp3=psp_at_k(pred, truth, prop, 3),
        psp5=psp_at_k(pred, truth, prop, 5),
        n_evaluated=len(rows) - skipped,
        n_skipped=skipped,
    )


def format_report(report: MetricReport) -> str:
    """Fixed-width table, metric values on the conventional 0-100 scale.
    Timing is intentionally not part of this block so saved reports stay
    byte-identical across reruns."""
    lines = [f"points evaluated {report.n_evaluated}  skipped (no positives) {report.n_skipped}"]
    for name, val in report.values().items():
        lines.append(f"{name:<6} {100.0 * val:8.4f}")
    return "\n".join(lines) + "\n"


def report_csv(report: MetricReport) -> str:
    names = ",".join(k.replace("@", "_at_").lower() for k in report.values())
    vals = ",".join(f"{100.0 * v:.4f}" for v in report.values().values())
    return f"{names}\n{vals}\n"


def sweep(bundle, corpus: Corpus, parameter: str, values) -> list[tuple[float, float, float]]:
    """Evaluate the bundle at each hyperparameter value; rows of
    (value, P@1, PSP@1).  Only beta can vary without retraining."""
    if parameter != "beta":
        raise ValueError(f"only 'beta' can be swept post-training, got {parameter!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    from labelsieve.dataset import label_stats

    prop = propensities(label_stats(corpus),
                        float(bundle.config["propensity_a"]),
                        float(bundle.config["propensity_b"]))
    k_sl = min(int(bundle.config["shortlist_k"]), bundle.index.n_labels)
    rows = []
    for v in values:
        cfg = PredictConfig(beta=float(v), k_shortlist=k_sl,
                            k_output=min(int(bundle.config["k_output"]), k_sl))
        pred = predict_batch(bundle, corpus, cfg)
        rows.append((float(v),
                     precision_at_k(pred, corpus, 1),
                     psp_at_k(pred, corpus, prop, 1)))
    return rows
