from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    auc: float
    roc_points: tuple[tuple[float, float], ...]
    n_positive: int
    n_negative: int
    config: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "auc": self.auc,
            "roc_points": [list(p) for p in self.roc_points],
            "class_counts": {"positive": self.n_positive, "negative": self.n_negative},
            "config": dict(self.config),
        }


def _midranks(scores: np.ndarray) -> np.ndarray:
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    mid = upper - (counts - 1) / 2.0
    return mid[inverse]


def roc_auc(scores, labels, config: Mapping[str, Any] | None = None) -> EvalReport:
    """AUC by the rank statistic, plus ROC points at every distinct threshold.

    Ties between a positive and a negative count one half.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(int)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos, n_neg = int((y == 1).sum()), int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        missing = "positive" if n_pos == 0 else "negative"
        raise ValueError(f"roc_auc needs both classes; no {missing} examples")
    ranks = _midranks(s)
    auc = (ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted == 1)
    fp = np.cumsum(y_sorted == 0)
    last_of_group = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tpr = np.r_[0.0, tp[last_of_group] / n_pos]
    fpr = np.r_[0.0, fp[last_of_group] / n_neg]
    points = tuple((float(a), float(b)) for a, b in zip(fpr, tpr))
    return EvalReport(float(auc), points, n_pos, n_neg, dict(config or {}))
