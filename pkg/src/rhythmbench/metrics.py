"""Evaluation metrics: confusion matrices, macro-averaged figures of merit,
and a numerically stable Gaussian tail log-probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

FIGURE_NAMES = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Integer count matrix with true classes on rows, predictions on columns."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if not np.issubdtype(counts.dtype, np.integer):
            raise ValueError("confusion matrix must hold integer counts")
        if (counts < 0).any():
            raise ValueError("confusion matrix counts must be nonnegative")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class FigureOfMerit:
    """Accuracy plus macro-averaged precision, recall, and f1."""

    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in FIGURE_NAMES}

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.accuracy, self.precision, self.recall, self.f1)


def confusion(true_labels, predicted_labels, n_classes: int) -> ConfusionMatrix:
    """Count matrix from parallel label sequences (class indices 0..C-1)."""
    true_labels = np.asarray(true_labels)
    predicted_labels = np.asarray(predicted_labels)
    if true_labels.shape != predicted_labels.shape or true_labels.ndim != 1:
        raise ValueError("length mismatch between true and predicted labels")
    if n_classes < 1:
        raise ValueError("n_classes must be at least 1")
    for name, labels in (("true", true_labels), ("predicted", predicted_labels)):
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise ValueError(f"{name} labels outside 0..{n_classes - 1}")
    flat = true_labels.astype(np.int64) * n_classes + predicted_labels.astype(np.int64)
    counts = np.bincount(flat, minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    return ConfusionMatrix(counts=counts)


def figures_of_merit(cm: ConfusionMatrix) -> FigureOfMerit:
    """Macro averages over all classes; zero-count denominators score 0.

    Each per-class figure is a single division of integer counts (for f1,
    2*diag / (rowsum + colsum)), so results do not depend on evaluation
    order.
    """
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    diag = np.diag(counts)
    row_sums = counts.sum(axis=1)
    col_sums = counts.sum(axis=0)

    def _safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
        out = np.zeros(len(num))
        mask = den > 0
        out[mask] = num[mask] / den[mask]
        return out

    precision = _safe_divide(diag, col_sums)
    recall = _safe_divide(diag, row_sums)
    f1 = _safe_divide(2 * diag, row_sums + col_sums)
    return FigureOfMerit(
        accuracy=float(np.trace(counts) / total),
        precision=float(precision.mean()),
        recall=float(recall.mean()),
        f1=float(f1.mean()),
    )


def gaussian_tail_log_prob(mean: float, std: float, threshold: float) -> float:
    """log P(X >= threshold) for X ~ Normal(mean, std).

    Evaluated in the log domain (asymptotic erfc expansion underneath), so it
    stays accurate far into the tail where the probability itself underflows:
    z-scores of 40 and beyond are fine.
    """
    if std <= 0:
        raise ValueError("std must be positive")
    z = (threshold - mean) / std
    return float(log_ndtr(-z))
