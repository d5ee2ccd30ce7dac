"""Confusion accounting and open-set evaluation metrics.

Class ids are 1-based throughout: known classes are 1..M and the open
class is M+1. ``f1_known`` averages over the M known classes, ``f1_open``
is the F1 of the open class alone, and ``f1_all`` averages over all M+1
classes, so (M * f1_known + f1_open) / (M + 1) == f1_all by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence


@dataclass
class ConfusionCounts:
    """Per-class true/false positive and false negative counts."""

    num_classes: int
    tp: list[int]
    fp: list[int]
    fn: list[int]
    total: int

    def for_class(self, class_id: int) -> tuple[int, int, int]:
        if not 1 <= class_id <= self.num_classes:
            raise ValueError(f"class id {class_id} out of range 1..{self.num_classes}")
        return self.tp[class_id - 1], self.fp[class_id - 1], self.fn[class_id - 1]


@dataclass
class MetricsReport:
    accuracy: float
    f1_all: float
    f1_known: float
    f1_open: float
    per_class: list[dict]
    M: int
    count: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_all": self.f1_all,
            "f1_known": self.f1_known,
            "f1_open": self.f1_open,
            "per_class": self.per_class,
            "M": self.M,
            "count": self.count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def confusion(preds: Sequence[int], golds: Sequence[int], num_classes: int) -> ConfusionCounts:
    """Count per-class TP/FP/FN for 1-based class ids."""
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    tp = [0] * num_classes
    fp = [0] * num_classes
    fn = [0] * num_classes
    for p, g in zip(preds, golds):
        if not 1 <= p <= num_classes:
            raise ValueError(f"predicted id {p} out of range 1..{num_classes}")
        if not 1 <= g <= num_classes:
            raise ValueError(f"gold id {g} out of range 1..{num_classes}")
        if p == g:
            tp[p - 1] += 1
        else:
            fp[p - 1] += 1
            fn[g - 1] += 1
    return ConfusionCounts(num_classes=num_classes, tp=tp, fp=fp, fn=fn, total=len(preds))


def precision_recall(counts: ConfusionCounts, class_id: int) -> tuple[float, float]:
    """Precision and recall for one class; zero denominators yield 0."""
    tp, fp, fn = counts.for_class(class_id)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return precision, recall


def f1_score(counts: ConfusionCounts, class_id: int) -> float:
    p, r = precision_recall(counts, class_id)
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def accuracy(counts: ConfusionCounts) -> float:
    return sum(counts.tp) / counts.total if counts.total > 0 else 0.0


def f1_all(counts: ConfusionCounts) -> float:
    """Unweighted mean F1 over all M+1 classes."""
    n = counts.num_classes
    return sum(f1_score(counts, c) for c in range(1, n + 1)) / n


def f1_known(counts: ConfusionCounts) -> float:
    """Unweighted mean F1 over the M known classes (1..M)."""
    m = counts.num_classes - 1
    if m < 1:
        raise ValueError("need at least one known class")
    return sum(f1_score(counts, c) for c in range(1, m + 1)) / m


def f1_open(counts: ConfusionCounts) -> float:
    """F1 of the open class (id M+1) alone."""
    return f1_score(counts, counts.num_classes)


def evaluate(preds: Sequence[int], golds: Sequence[int], num_classes: int) -> MetricsReport:
    """Full metrics report over predictions against golds."""
    counts = confusion(preds, golds, num_classes)
    per_class = []
    for c in range(1, num_classes + 1):
        p, r = precision_recall(counts, c)
        per_class.append({"class": c, "precision": p, "recall": r, "f1": f1_score(counts, c)})
    return MetricsReport(
        accuracy=accuracy(counts),
        f1_all=f1_all(counts),
        f1_known=f1_known(counts),
        f1_open=f1_open(counts),
        per_class=per_class,
        M=num_classes - 1,
        count=counts.total,
    )
