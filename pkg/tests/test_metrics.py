import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsmetric.metrics import (
    classification_report, confusion_matrix, silhouette_score, to_markdown,
)


def naive_report(truth, pred, C):
    """Per-category TP/FP/FN by direct counting; zero-denominator -> 0."""
    prec, rec, f1 = [], [], []
    for c in range(C):
        tp = sum(1 for t, p in zip(truth, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(truth, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(truth, pred) if t == c and p != c)
        pc = tp / (tp + fp) if tp + fp else 0.0
        rc = tp / (tp + fn) if tp + fn else 0.0
        prec.append(pc)
        rec.append(rc)
        f1.append(2 * pc * rc / (pc + rc) if pc + rc else 0.0)
    acc = sum(1 for t, p in zip(truth, pred) if t == p) / len(truth)
    return acc, prec, rec, f1


def naive_silhouette(X, labels):
    n = len(X)
    dist = lambda i, j: math.sqrt(sum((X[i][k] - X[j][k]) ** 2 for k in range(len(X[i]))))
    clusters = sorted(set(labels))
    total = 0.0
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            continue
        a = sum(dist(i, j) for j in own) / len(own)
        b = min(sum(dist(i, j) for j in range(n) if labels[j] == c)
                / sum(1 for j in range(n) if labels[j] == c)
                for c in clusters if c != labels[i])
        total += (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return total / n


def test_perfect_predictions_diagonal():
    cm = confusion_matrix([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert np.array_equal(cm.counts, np.diag([1, 1, 2]))
    r = classification_report(cm)
    assert r.accuracy == 1.0 and r.macro_precision == r.macro_recall == r.macro_f1 == 1.0


def test_hand_tally():
    cm = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 2], 3)
    assert cm.counts.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]
    r = classification_report(cm)
    assert r.accuracy == 0.75
    np.testing.assert_allclose(r.precision, [1, 0.5, 1])
    np.testing.assert_allclose(r.recall, [0.5, 1, 1])
    np.testing.assert_allclose(r.f1, [2 / 3, 2 / 3, 1])
    assert r.macro_precision == pytest.approx(5 / 6, abs=1e-12)
    assert r.macro_recall == pytest.approx(5 / 6, abs=1e-12)
    assert r.macro_f1 == pytest.approx(7 / 9, abs=1e-12)


def test_tp_tn_consistency():
    cm = confusion_matrix([0, 0, 1, 2, 1], [0, 1, 1, 2, 2], 3)
    assert np.all(cm.tp() + cm.fn() == cm.counts.sum(axis=1))
    assert np.all(cm.tp() + cm.fp() + cm.fn() + cm.tn() == cm.total)


def test_single_category_all_correct():
    r = classification_report(confusion_matrix([0, 0, 0], [0, 0, 0], 1))
    assert r.precision[0] == r.recall[0] == r.f1[0] == 1


def test_undefined_ratios_are_zero_and_flagged():
    r = classification_report(confusion_matrix([0, 0, 1], [0, 0, 0], 3))
    assert r.precision[1] == 0 and r.recall[2] == 0
    assert ("precision", 2) in r.undefined and ("recall", 2) in r.undefined


@pytest.mark.parametrize("t,p", [([], []), ([0, 1], [0]), ([0, 3], [0, 1])])
def test_confusion_errors(t, p):
    with pytest.raises(ValueError):
        confusion_matrix(t, p, 3)


def test_report_matches_naive_oracle_1000_instances():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        C = int(rng.integers(2, 6))
        n = int(rng.integers(1, 40))
        t = rng.integers(0, C, n).tolist()
        p = rng.integers(0, C, n).tolist()
        cm = confusion_matrix(t, p, C)
        r = classification_report(cm)
        acc, prec, rec, f1 = naive_report(t, p, C)
        assert r.accuracy == acc
        assert r.precision.tolist() == prec
        assert r.recall.tolist() == rec
        assert r.f1.tolist() == f1
        # float product is not exact; the quotient is, and rounding recovers the trace
        assert r.accuracy == np.trace(cm.counts) / cm.total
        assert round(r.accuracy * cm.total) == np.trace(cm.counts)


def test_silhouette_duplicates_is_one():
    X = np.array([[0.0, 0], [0, 0], [5, 5], [5, 5]])
    assert silhouette_score(X, [0, 0, 1, 1]) == 1.0


def test_silhouette_four_points():
    X = np.array([[0.0, 0], [0, 1], [10, 0], [10, 1]])
    b = (10 + math.sqrt(101)) / 2
    expected = (b - 1) / b
    assert silhouette_score(X, [0, 0, 1, 1]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.9003, abs=1e-4)


def test_silhouette_precondition():
    X = np.random.default_rng(0).normal(size=(5, 2))
    with pytest.raises(ValueError, match="N-1"):
        silhouette_score(X, [0] * 5)
    with pytest.raises(ValueError):
        silhouette_score(X, [0, 1, 2, 3, 4])


def test_silhouette_singletons_score_zero():
    X = np.array([[0.0], [0.1], [5.0], [9.0]])
    # point 3 is alone in its cluster
    ref = naive_silhouette(X.tolist(), [0, 0, 1, 2])
    assert silhouette_score(X, [0, 0, 1, 2]) == pytest.approx(ref, abs=1e-12)


def test_silhouette_matches_oracle_200_instances():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(4, 25))
        d = int(rng.integers(1, 5))
        k = int(rng.integers(2, n))
        X = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
        labels = rng.integers(0, k, n)
        if not 2 <= len(set(labels.tolist())) <= n - 1:
            continue
        got = silhouette_score(X, labels)
        assert abs(got - naive_silhouette(X.tolist(), labels.tolist())) < 1e-9
        assert -1 <= got <= 1


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(1e-3, 1e3), angle=st.floats(0, 2 * math.pi),
       shift=st.floats(-100, 100))
def test_silhouette_isometry_and_scale(seed, scale, angle, shift):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 2))
    labels = np.repeat([0, 1, 2], 4)
    base = silhouette_score(X, labels)
    R = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    assert silhouette_score(X @ R.T + shift, labels) == pytest.approx(base, abs=1e-9)
    assert silhouette_score(X * scale, labels) == pytest.approx(base, abs=1e-9)


def test_markdown_alignment():
    md = to_markdown(("Model", "Accuracy"), [["cnn", "0.9000"], ["logistic-regression", "0.8"]])
    lines = md.splitlines()
    assert len({len(l) for l in lines}) == 1
    assert lines[0].startswith("| Model")
