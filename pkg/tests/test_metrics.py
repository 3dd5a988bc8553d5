import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logquality.metrics import (
    classification_metrics, confusion_matrix, error_at_k, random_baseline_error_at_k, rank_evaluation, roc_auc,
    write_per_class_csv,
)
from oracles import all_inputs, oracle_metrics


def test_exhaustive_small_inputs():
    for labels, predictions in all_inputs(3):
        m = classification_metrics(labels, predictions, n_classes=3)
        expected = oracle_metrics(labels, predictions)
        assert (m.accuracy, m.precision, m.recall, m.f1) == pytest.approx(expected, abs=1e-12)


def test_all_correct():
    m = classification_metrics([0, 1, 2, 1], [0, 1, 2, 1])
    assert (m.accuracy, m.f1) == (1.0, 1.0) and m.warnings == []


def test_binary_hand_case():
    labels = [1] * 10 + [0] * 10
    predictions = [1] * 8 + [0] * 2 + [1] * 2 + [0] * 8  # TP 8, FN 2, FP 2, TN 8
    m = classification_metrics(labels, predictions, n_classes=2)
    pos = m.per_class[1]
    assert (pos["precision"], pos["recall"], pos["f1"]) == pytest.approx((0.8, 0.8, 0.8))
    assert m.specificity == pytest.approx(0.8)
    assert m.confusion == [[8, 2], [2, 8]]


def test_specificity_follows_positive_class():
    labels, predictions = [0, 0, 0, 1], [0, 1, 1, 1]
    assert classification_metrics(labels, predictions, n_classes=2, positive=1).specificity == pytest.approx(1 / 3)
    assert classification_metrics(labels, predictions, n_classes=2, positive=0).specificity == 1.0


def test_zero_denominators_warn():
    m = classification_metrics([0, 0], [0, 0], n_classes=3)
    assert m.per_class[1]["precision"] == 0.0
    assert any("precision[1]" in w for w in m.warnings)


def test_length_mismatch():
    with pytest.raises(ValueError):
        classification_metrics([0, 1], [0])


def test_uniform_scores_give_half_auc():
    labels = [0, 1, 2, 0, 1, 2, 2]
    scores = np.full((7, 3), 1 / 3)
    m = classification_metrics(labels, [0] * 7, scores)
    assert abs(m.auc - 0.5) <= 1e-9
    assert all(abs(row["auc"] - 0.5) <= 1e-9 for row in m.per_class)


def test_single_class_auc_is_flagged():
    m = classification_metrics([0, 0], [0, 0], np.array([[0.9, 0.1], [0.8, 0.2]]))
    assert m.per_class[0]["auc"] == 0.0
    assert any("auc" in w for w in m.warnings)
    assert roc_auc([1, 1], [0.1, 0.2]) is None


def brute_auc(y, s):
    pos = [v for v, t in zip(s, y) if t]
    neg = [v for v, t in zip(s, y) if not t]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 6)), min_size=2, max_size=30)
       .filter(lambda xs: len({t for t, _ in xs}) == 2))
def test_auc_matches_pair_counting_and_is_rank_invariant(pairs):
    y = [t for t, _ in pairs]
    s = np.array([v for _, v in pairs], dtype=float)
    auc = roc_auc(y, s)
    assert auc == pytest.approx(brute_auc(y, s), abs=1e-12)
    assert roc_auc(y, np.exp(s) * 3 - 1) == pytest.approx(auc, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=20))
def test_macro_f1_between_class_extremes(pairs):
    labels, predictions = zip(*pairs)
    m = classification_metrics(labels, predictions, n_classes=3)
    f1s = [row["f1"] for row in m.per_class]
    assert min(f1s) - 1e-12 <= m.f1 <= max(f1s) + 1e-12
    assert np.array_equal(np.array(m.confusion), confusion_matrix(labels, predictions, 3))


def test_per_class_csv(tmp_path):
    m = classification_metrics([0, 1], [0, 1], np.eye(2), class_names=["info", "error"])
    write_per_class_csv(m, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "class,precision,recall,f1,auc,support"
    assert lines[1].startswith("info,1.0,1.0,1.0,1.0,1")


def test_error_at_k_examples():
    assert error_at_k([1] * 75 + [2] * 25, 1) == 0.25
    assert error_at_k([1, 2, 3, 4], 2) == 0.5
    assert all(error_at_k([1, 1, 1], k) == 0 for k in range(1, 5))
    with pytest.raises(ValueError):
        error_at_k([], 1)
    with pytest.raises(ValueError):
        error_at_k([0, 1], 1)


@settings(max_examples=200)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=40))
def test_error_at_k_non_increasing(ranks):
    ev = rank_evaluation(ranks, 12)
    errs = [ev.error_at[k] for k in range(1, 13)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert ev.error_at[max(ranks)] == 0.0


def test_random_baseline():
    assert random_baseline_error_at_k([1, 1, 1], 1) == 0.0
    assert random_baseline_error_at_k([3, 5], 5) == 0.0
    assert random_baseline_error_at_k([2] * 10, 1, trials=10_000, seed=0) == pytest.approx(0.5, abs=0.02)
    # uniform rank among n tokens misses the top k with probability (n - k) / n
    assert random_baseline_error_at_k([4, 5], 1, trials=20_000, seed=1) == pytest.approx((3 / 4 + 4 / 5) / 2, abs=0.02)
    assert random_baseline_error_at_k([4, 5], 1, seed=3) == random_baseline_error_at_k([4, 5], 1, seed=3)
    with pytest.raises(ValueError):
        random_baseline_error_at_k([2], 1, trials=0)
