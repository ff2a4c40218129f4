"""Confusion-matrix metrics for inter-procedural detection."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyConfusion


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def add(self, predicted: bool, actual: bool) -> "Confusion":
        return Confusion(
            self.tp + (predicted and actual),
            self.fp + (predicted and not actual),
            self.fn + (not predicted and actual),
            self.tn + (not predicted and not actual),
        )


@dataclass(frozen=True)
class Metrics:
    fpr: float
    fnr: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    undefined: tuple = ()  # names whose denominator was zero (reported as 0)

    def to_dict(self) -> dict:
        return {
            "fpr": self.fpr, "fnr": self.fnr, "accuracy": self.accuracy,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "undefined": list(self.undefined),
        }


def compute_metrics(confusion: Confusion) -> Metrics:
    c = confusion
    if min(c.tp, c.fp, c.fn, c.tn) < 0:
        raise ValueError("confusion counts must be non-negative")
    if c.total == 0:
        raise EmptyConfusion("confusion matrix is empty")
    undefined = []

    def ratio(name, num, den):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    fpr = ratio("fpr", c.fp, c.fp + c.tn)
    fnr = ratio("fnr", c.fn, c.fn + c.tp)
    precision = ratio("precision", c.tp, c.tp + c.fp)
    recall = ratio("recall", c.tp, c.tp + c.fn)
    f1 = ratio("f1", 2 * precision * recall, precision + recall)
    accuracy = (c.tp + c.tn) / c.total
    return Metrics(fpr, fnr, accuracy, precision, recall, f1, tuple(undefined))
