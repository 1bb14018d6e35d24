"""Threshold-summed average precision and ROC-AUC with tie-aware thresholds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabels, LengthMismatch, NoPositives, NonFinite


@dataclass(frozen=True, eq=False)
class ScoredLabels:
    scores: np.ndarray
    labels: np.ndarray

    def __init__(self, scores, labels):
        s = np.asarray(scores, dtype=np.float64).ravel()
        y = np.asarray(labels).ravel()
        if s.shape != y.shape or s.size == 0:
            raise LengthMismatch(f"{s.size} scores vs {y.size} labels")
        if not np.isfinite(s).all():
            raise NonFinite("scores must be finite")
        if not np.isin(y, (0, 1)).all():
            raise DegenerateLabels("labels must be 0 or 1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y.astype(np.int64))


def _threshold_counts(data: ScoredLabels):
    """Cumulative TP and FP at each distinct score, highest score first."""
    order = np.argsort(-data.scores, kind="mergesort")
    s = data.scores[order]
    y = data.labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # the last index of each run of equal scores; tied items cross together
    ends = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    return tp[ends], fp[ends]


def average_precision(data: ScoredLabels) -> float:
    """Sum over thresholds of recall increment times precision at that threshold."""
    tp, fp = _threshold_counts(data)
    n_pos = tp[-1]
    if n_pos == 0:
        raise NoPositives("average precision needs at least one positive label")
    recall = tp / n_pos
    precision = tp / (tp + fp)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def roc_auc(data: ScoredLabels) -> float:
    """Trapezoidal area under the ROC curve; equals P(pos > neg) + P(tie)/2."""
    tp, fp = _threshold_counts(data)
    n_pos, n_neg = tp[-1], fp[-1]
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("ROC-AUC needs at least one positive and one negative label")
    # trapezoids in integer count units, scaled once at the end
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice_area / (2.0 * int(n_pos) * int(n_neg))
