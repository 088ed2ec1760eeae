"""Classification and regression quality measures.

Conventions, fixed so that scores are reproducible to the last bit:

* Confusion matrix rows are true labels, columns predicted labels, both in
  first-appearance order: labels are interned by scanning rows in order and
  looking at the true label, then the predicted one.
* precision = TP / (TP + FP), recall = TP / (TP + FN), and
  F1 = 2 * precision * recall / (precision + recall); any 0/0 is defined as
  0 rather than an error, so a class never predicted scores 0.
* Macro F1 averages per-class F1 over the matrix's label set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError

__all__ = [
    "ConfusionMatrix",
    "ClassificationReport",
    "confusion_matrix",
    "precision_recall_f1",
    "macro_f1",
    "classification_report",
    "mean_squared_error",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: np.ndarray  # counts[i, j] = rows with true labels[i], predicted labels[j]

    def __post_init__(self):
        self.counts.flags.writeable = False

    def count(self, true: str, pred: str) -> int:
        i = self.labels.index(true)
        j = self.labels.index(pred)
        return int(self.counts[i, j])


def confusion_matrix(y_true: Sequence[str], y_pred: Sequence[str]) -> ConfusionMatrix:
    if len(y_true) != len(y_pred):
        raise DataError("y_true and y_pred have different lengths")
    if len(y_true) == 0:
        raise DataError("cannot score zero rows")
    order: dict[str, int] = {}
    for t, p in zip(y_true, y_pred):
        order.setdefault(t, len(order))
        order.setdefault(p, len(order))
    counts = np.zeros((len(order), len(order)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[order[t], order[p]] += 1
    return ConfusionMatrix(labels=tuple(order), counts=counts)


def _safe_div(num: float, den: float) -> float:
    return num / den if den != 0 else 0.0


def precision_recall_f1(cm: ConfusionMatrix, label: str) -> tuple[float, float, float]:
    if label not in cm.labels:
        raise DataError(f"label {label!r} not in confusion matrix")
    i = cm.labels.index(label)
    tp = float(cm.counts[i, i])
    fp = float(cm.counts[:, i].sum() - cm.counts[i, i])
    fn = float(cm.counts[i, :].sum() - cm.counts[i, i])
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    return precision, recall, f1


def macro_f1(cm: ConfusionMatrix) -> float:
    scores = [precision_recall_f1(cm, label)[2] for label in cm.labels]
    return sum(scores) / len(scores)


@dataclass(frozen=True)
class ClassificationReport:
    matrix: ConfusionMatrix
    per_class: dict[str, tuple[float, float, float]]  # label -> (P, R, F1)
    macro_f1: float
    headline_label: str
    headline_f1: float

    def to_dict(self) -> dict:
        return {
            "labels": list(self.matrix.labels),
            "matrix": [[int(v) for v in row] for row in self.matrix.counts],
            "per_class": {
                label: {"precision": p, "recall": r, "f1": f}
                for label, (p, r, f) in self.per_class.items()
            },
            "macro_f1": self.macro_f1,
            "headline_label": self.headline_label,
            "headline_f1": self.headline_f1,
        }


def classification_report(
    y_true: Sequence[str],
    y_pred: Sequence[str],
    headline_label: str | None = None,
) -> ClassificationReport:
    """Full scoring bundle for one prediction run.

    ``headline_label`` picks the class whose F1 is the run's single summary
    number (callers use the minority class of a binary problem); when None
    the headline is macro F1 over all labels, reported as label "macro".
    """
    cm = confusion_matrix(y_true, y_pred)
    per_class = {label: precision_recall_f1(cm, label) for label in cm.labels}
    macro = macro_f1(cm)
    if headline_label is None:
        label, headline = "macro", macro
    else:
        if headline_label not in cm.labels:
            # Never seen in truth or prediction: score it as all-miss.
            per_class[headline_label] = (0.0, 0.0, 0.0)
        label, headline = headline_label, per_class[headline_label][2]
    return ClassificationReport(
        matrix=cm,
        per_class=per_class,
        macro_f1=macro,
        headline_label=label,
        headline_f1=headline,
    )


def mean_squared_error(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise DataError("y_true and y_pred have different shapes")
    if y_true.size == 0:
        raise DataError("cannot score zero rows")
    d = y_true - y_pred
    return float(np.mean(d * d))
