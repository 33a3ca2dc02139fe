"""ROC analysis and confusion-matrix summaries for anomaly scores.

The positive class is the anomaly class (label 1) throughout.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import EvaluationError, ShapeError


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fpr", "tpr"])
            for f, t in zip(self.fpr, self.tpr):
                w.writerow([repr(float(f)), repr(float(t))])


def _binary(labels, name="labels") -> np.ndarray:
    y = np.asarray(labels).ravel()
    if not np.all((y == 0) | (y == 1)):
        raise EvaluationError(f"{name} must be 0/1")
    return y.astype(bool)


def roc_auc(scores, labels) -> RocCurve:
    """ROC curve over every distinct score and its trapezoidal area.

    Tied scores form a single threshold step, so the area equals the
    Mann-Whitney probability ``P(s_anom > s_norm) + P(tie)/2``.

    Raises:
        EvaluationError: only one class present.
        ShapeError: lengths differ.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _binary(labels)
    if s.shape != y.shape:
        raise ShapeError(f"{s.size} scores for {y.size} labels")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC needs both normal and anomalous observations")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each block of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[ends]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocCurve(fpr, tpr, thresholds, auc)


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    auc: float | None = None
    f1_undefined: bool = False

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def confusion(predictions, labels, auc: float | None = None) -> EvalReport:
    """Counts and anomaly-class precision/recall/F1.

    A zero denominator gives 0 for that quantity; ``f1_undefined`` records
    that the F1 convention was applied.
    """
    pred = _binary(predictions, "predictions")
    y = _binary(labels)
    if pred.shape != y.shape:
        raise ShapeError(f"{pred.size} predictions for {y.size} labels")
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    undefined = precision + recall == 0
    f1 = 0.0 if undefined else 2 * precision * recall / (precision + recall)
    return EvalReport(tp, fp, tn, fn, precision, recall, f1, auc, undefined)
