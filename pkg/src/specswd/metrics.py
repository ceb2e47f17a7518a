"""Classification accuracy and recall@k in a feature space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


@dataclass
class EvalResult:
    acc: float
    recall_at_1: float
    n: int


def accuracy(logits, labels) -> float:
    """Fraction of rows whose argmax equals the label; ties go to the lower class."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("accuracy of an empty set")
    if len(logits) != len(labels):
        raise DataError(f"{len(logits)} predictions for {len(labels)} labels")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def recall_at_k(features, labels, k: int = 1) -> float:
    """Share of samples with a same-class sample among their k nearest neighbours.

    Brute-force Euclidean search; a sample is never its own neighbour and
    distance ties go to the lower sample index.
    """
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(x)
    if x.ndim == 1:
        x = x[:, None]
    if n < 2:
        raise DataError("recall_at_k needs at least two samples")
    if k < 1 or k >= n:
        raise ConfigError(f"k must be in [1, n-1], got k={k} for n={n}")
    hits = 0
    for i in range(n):
        d = ((x - x[i]) ** 2).sum(axis=1)
        d[i] = np.inf
        nearest = np.argsort(d, kind="stable")[:k]
        hits += bool(np.any(labels[nearest] == labels[i]))
    return hits / n


def evaluate(logits, pooled_features, labels) -> EvalResult:
    return EvalResult(accuracy(logits, labels), recall_at_k(pooled_features, labels, 1), len(labels))
