import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from specswd.errors import ConfigError, DataError
from specswd.metrics import accuracy, evaluate, recall_at_k


def quadratic_scan_recall(x, labels, k):
    # independent oracle: explicit pairwise loops, ties to the lower index
    n = len(x)
    hits = 0
    for i in range(n):
        cands = []
        for j in range(n):
            if j != i:
                cands.append((float(((x[i] - x[j]) ** 2).sum()), j))
        cands.sort()
        hits += any(labels[j] == labels[i] for _, j in cands[:k])
    return hits / n


def test_accuracy_examples():
    assert accuracy([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]], [0, 1, 1]) == pytest.approx(2 / 3)
    assert accuracy([[1, 0], [0, 1]], [0, 1]) == 1.0
    assert accuracy([[0.5, 0.5]], [0]) == 1.0  # tie goes to class 0


def test_accuracy_of_shuffled_labels_is_chance():
    rng = np.random.default_rng(0)
    labels = np.repeat([0, 1], 5000)
    logits = np.eye(2)[rng.permutation(labels)]
    assert abs(accuracy(logits, labels) - 0.5) < 0.03


def test_accuracy_errors():
    with pytest.raises(DataError):
        accuracy(np.zeros((0, 2)), [])
    with pytest.raises(DataError):
        accuracy([[1, 0]], [0, 1])


def test_recall_examples():
    assert recall_at_k([0.0, 0.1, 5.0], [0, 0, 1], 1) == pytest.approx(2 / 3)
    x = np.random.default_rng(1).normal(size=(10, 3))
    assert recall_at_k(np.r_[x, x], np.r_[np.arange(10), np.arange(10)], 1) == 1.0


def test_recall_matches_oracle_on_random_points():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(200, 4))
    labels = rng.integers(0, 2, 200)
    for k in (1, 3):
        assert recall_at_k(x, labels, k) == quadratic_scan_recall(x, labels, k)


@given(arrays(np.int64, (12, 2), elements=st.integers(0, 2)), arrays(np.int64, 12, elements=st.integers(0, 1)))
def test_recall_oracle_with_ties(x, labels):
    assert recall_at_k(x, labels, 1) == quadratic_scan_recall(x.astype(float), labels, 1)


def test_recall_errors():
    with pytest.raises(ConfigError):
        recall_at_k([[0.0], [1.0]], [0, 1], 2)
    with pytest.raises(DataError):
        recall_at_k([[0.0]], [0], 1)


def test_evaluate_bounds():
    rng = np.random.default_rng(3)
    res = evaluate(rng.normal(size=(20, 2)), rng.normal(size=(20, 5)), rng.integers(0, 2, 20))
    assert 0 <= res.acc <= 1 and 0 <= res.recall_at_1 <= 1 and res.n == 20
