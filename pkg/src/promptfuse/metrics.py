"""Confusion-matrix classification metrics: ACC, WF1, WP and macro recall."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateInputError


@dataclass
class MetricsReport:
    confusion: np.ndarray = field(repr=False)
    acc: float
    wf1: float
    wp: float
    r: float

    def as_dict(self) -> dict:
        return {"acc": self.acc, "wf1": self.wf1, "wp": self.wp, "r": self.r}


def confusion_matrix(y_true, y_pred, num_labels: int) -> np.ndarray:
    """I x I count matrix, rows = true label, columns = prediction."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ConfigError(f"{y_true.shape} labels vs {y_pred.shape} predictions")
    for arr, what in ((y_true, "label"), (y_pred, "prediction")):
        if arr.size and (arr.min() < 0 or arr.max() >= num_labels):
            raise ConfigError(f"{what} outside [0, {num_labels})")
    out = np.zeros((num_labels, num_labels), dtype=np.int64)
    np.add.at(out, (y_true, y_pred), 1)
    return out


def compute_metrics(confusion: np.ndarray) -> MetricsReport:
    """Metrics from a confusion matrix; empty classes contribute 0 (0/0 -> 0).

    WF1 and WP are support-weighted; R is macro-averaged recall over all
    classes."""
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise ConfigError(f"confusion matrix must be square, got {confusion.shape}")
    if (confusion < 0).any():
        raise ConfigError("confusion matrix has negative counts")
    total = confusion.sum()
    if total == 0:
        raise DegenerateInputError("empty confusion matrix")

    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        pr_sum = precision + recall
        f1 = np.where(pr_sum > 0, 2 * precision * recall / np.where(pr_sum > 0, pr_sum, 1.0), 0.0)

    weights = support / total
    return MetricsReport(
        confusion=confusion,
        acc=float(tp.sum() / total),
        wf1=float((weights * f1).sum()),
        wp=float((weights * precision).sum()),
        r=float(recall.mean()),
    )
