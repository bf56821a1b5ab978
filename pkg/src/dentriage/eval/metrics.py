"""Confusion matrices and support-weighted classification metrics."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..llm_icl import ParseFailure


def is_failure(pred) -> bool:
    """A prediction that carries no class (an unparseable LLM answer)."""
    return pred is None or isinstance(pred, ParseFailure)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion counts must be a square matrix")
        if (c < 0).any():
            raise ValueError("confusion counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tolist(self) -> list[list[int]]:
        return self.counts.tolist()


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence, n_classes: int) -> ConfusionMatrix:
    """Count (true, predicted) pairs; failed predictions land in column ``(t + 1) % n_classes``."""
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    if len(y_true) != len(y_pred):
        raise ValueError(f"length mismatch: {len(y_true)} true labels vs {len(y_pred)} predictions")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        t = _class_index(t, n_classes, "true label")
        if is_failure(p):
            p = (t + 1) % n_classes
        else:
            p = _class_index(p, n_classes, "prediction")
        counts[t, p] += 1
    return ConfusionMatrix(counts)


def _class_index(value, n: int, what: str) -> int:
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
        raise ValueError(f"{what} {value!r} is not a class index")
    if not 0 <= int(value) < n:
        raise ValueError(f"{what} {int(value)} is outside [0, {n})")
    return int(value)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f_measure: float

    def rounded(self, digits: int = 3) -> tuple[str, str, str, str]:
        return tuple(f"{v:.{digits}f}" for v in (self.accuracy, self.precision, self.recall, self.f_measure))

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f_measure": self.f_measure}


def compute_metrics(cm: ConfusionMatrix, averaging: str = "weighted") -> MetricsReport:
    """Accuracy plus per-class precision, recall and F1 averaged with true-class support as weights.

    Arithmetic is exact (rationals), so weighted recall equals accuracy to the last bit.
    """
    if averaging.lower() != "weighted":
        raise ValueError(f"unsupported averaging {averaging!r}")
    counts = cm.counts
    total = int(counts.sum())
    if total == 0:
        raise ValueError("cannot score an empty confusion matrix")
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    precision = recall = f1 = Fraction(0)
    for c in range(cm.n_classes):
        support = int(rows[c])
        if support == 0:
            continue
        tp = int(counts[c, c])
        p = Fraction(tp, int(cols[c])) if cols[c] else Fraction(0)
        r = Fraction(tp, support)
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        w = Fraction(support, total)
        precision += w * p
        recall += w * r
        f1 += w * f
    accuracy = Fraction(int(np.trace(counts)), total)
    return MetricsReport(float(accuracy), float(precision), float(recall), float(f1))
