"""Classification metrics from a confusion matrix (rows = true, cols = predicted).

Macro averages are unweighted means over classes; a class nobody predicted
has precision 0 and a class absent from the evaluation set has recall 0.
Weighted averages use the true-class support as weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

import numpy as np

from kws.errors import ArgumentError
from kws.utils import atomic_write


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], num_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ArgumentError(f"{len(y_true)} labels but {len(y_pred)} predictions")
    for name, values in (("label", y_true), ("prediction", y_pred)):
        if values.size and (values.min() < 0 or values.max() >= num_classes):
            raise ArgumentError(f"{name} outside 0..{num_classes - 1}")
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)
    return matrix


def _safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass
class EvalReport:
    labels: List[str]
    confusion: np.ndarray
    accuracy: float
    precision: float
    recall: float
    f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_class_precision: List[float]
    per_class_recall: List[float]
    per_class_f1: List[float]
    support: List[int]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @classmethod
    def from_confusion(cls, confusion: np.ndarray, labels: Sequence[str]) -> "EvalReport":
        confusion = np.asarray(confusion, dtype=np.int64)
        total = confusion.sum()
        if total == 0:
            raise ArgumentError("cannot evaluate an empty prediction set")
        tp = np.diag(confusion).astype(np.float64)
        support = confusion.sum(axis=1)
        predicted = confusion.sum(axis=0)

        precision = _safe_divide(tp, predicted)
        recall = _safe_divide(tp, support)
        f1 = _safe_divide(2.0 * precision * recall, precision + recall)
        weights = support / total

        return cls(
            labels=list(labels),
            confusion=confusion,
            accuracy=float(tp.sum() / total),
            precision=float(precision.mean()),
            recall=float(recall.mean()),
            f1=float(f1.mean()),
            weighted_precision=float((precision * weights).sum()),
            weighted_recall=float((recall * weights).sum()),
            weighted_f1=float((f1 * weights).sum()),
            per_class_precision=precision.tolist(),
            per_class_recall=recall.tolist(),
            per_class_f1=f1.tolist(),
            support=support.tolist(),
        )

    @classmethod
    def from_predictions(
        cls, y_true: Sequence[int], y_pred: Sequence[int], labels: Sequence[str]
    ) -> "EvalReport":
        return cls.from_confusion(confusion_matrix(y_true, y_pred, len(labels)), labels)

    def to_dict(self) -> Dict:
        return {
            "labels": self.labels,
            "total": self.total,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "weighted": {
                "precision": self.weighted_precision,
                "recall": self.weighted_recall,
                "f1": self.weighted_f1,
            },
            "per_class": {
                label: {
                    "precision": p,
                    "recall": r,
                    "f1": f,
                    "support": s,
                }
                for label, p, r, f, s in zip(
                    self.labels,
                    self.per_class_precision,
                    self.per_class_recall,
                    self.per_class_f1,
                    self.support,
                )
            },
            "confusion_matrix": self.confusion.tolist(),
        }

    def to_json(self, path: Union[str, Path]) -> None:
        with atomic_write(path) as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def compare_reports(reports: Mapping[str, EvalReport], weighted: bool = False) -> str:
    """Model comparison table: accuracy, average precision/recall, F1."""
    header = f"{'Model':<16}{'Accuracy':>10}{'Avg Precision':>15}{'Avg Recall':>12}{'F1':>8}"
    lines = [header, "-" * len(header)]
    for name, r in reports.items():
        p, rc, f = (
            (r.weighted_precision, r.weighted_recall, r.weighted_f1)
            if weighted
            else (r.precision, r.recall, r.f1)
        )
        lines.append(f"{name:<16}{r.accuracy:>10.2f}{p:>15.2f}{rc:>12.2f}{f:>8.2f}")
    return "\n".join(lines)
