"""Confusion-matrix classification metrics and the silhouette score."""

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C); row = true category, column = predicted

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def num_categories(self):
        return self.counts.shape[0]

    def tp(self):
        return np.diag(self.counts).astype(np.int64)

    def fp(self):
        return self.counts.sum(axis=0) - self.tp()

    def fn(self):
        return self.counts.sum(axis=1) - self.tp()

    def tn(self):
        return self.total - self.tp() - self.fp() - self.fn()


@dataclass
class ClassificationReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    undefined: list  # (metric, category) pairs set to 0 by convention

    @property
    def macro_precision(self):
        return float(self.precision.mean())

    @property
    def macro_recall(self):
        return float(self.recall.mean())

    @property
    def macro_f1(self):
        return float(self.f1.mean())


def confusion_matrix(true_labels, predicted_labels, num_categories):
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError(f"label arrays differ in shape: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise ValueError("confusion matrix of zero samples")
    for arr in (t, p):
        if arr.min() < 0 or arr.max() >= num_categories:
            raise ValueError(f"label outside [0, {num_categories})")
    counts = np.zeros((num_categories, num_categories), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def _safe_ratio(num, den):
    num = num.astype(np.float64)
    den = den.astype(np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def classification_report(cm):
    """Accuracy plus one-vs-rest precision/recall/F1 per category.

    A ratio whose denominator is zero is reported as 0 and listed in
    ``undefined``.
    """
    if cm.total == 0:
        raise ValueError("classification report of an empty confusion matrix")
    tp, fp, fn = cm.tp(), cm.fp(), cm.fn()
    precision = _safe_ratio(tp, tp + fp)
    recall = _safe_ratio(tp, tp + fn)
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    undefined = ([("precision", c) for c in np.flatnonzero(tp + fp == 0)]
                 + [("recall", c) for c in np.flatnonzero(tp + fn == 0)]
                 + [("f1", c) for c in np.flatnonzero(precision + recall == 0)])
    accuracy = float(np.trace(cm.counts)) / cm.total
    return ClassificationReport(accuracy, precision, recall, f1, undefined)


def silhouette_score(X, labels):
    """Mean over points of (b - a) / max(a, b) with Euclidean distances.

    a: mean distance to the other members of the point's cluster; b: the
    smallest mean distance to any other cluster.  Points in singleton
    clusters score 0.  Requires 2 <= #clusters <= N - 1.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    n = X.shape[0]
    uniq, inv = np.unique(labels, return_inverse=True)
    k = len(uniq)
    if not 2 <= k <= n - 1:
        raise ValueError(
            f"silhouette needs between 2 and N-1 clusters (N={n}), got {k}")
    D = cdist(X, X)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), inv] = 1.0
    sizes = onehot.sum(axis=0)
    sums = D @ onehot                      # (n, k) distance sums to each cluster
    own = sizes[inv]
    a = np.where(own > 1, sums[np.arange(n), inv] / np.maximum(own - 1, 1), 0.0)
    means = sums / sizes[None, :]
    means[np.arange(n), inv] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


# report tables ---------------------------------------------------------------

TABLE1_COLUMNS = ("Model", "Accuracy", "Precision", "Recall", "F1-score")
TABLE2_COLUMNS = ("Model", "K-Means", "GMM")


def _fmt(v, digits=4):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "n/a"
    return f"{v:.{digits}f}"


def table1_rows(reports):
    """``reports``: ordered mapping model name -> ClassificationReport."""
    return [[name, _fmt(r.accuracy), _fmt(r.macro_precision), _fmt(r.macro_recall),
             _fmt(r.macro_f1)] for name, r in reports.items()]


def table2_rows(scores, algorithms=("kmeans", "gmm")):
    """``scores``: ordered mapping source name -> {"kmeans": s, "gmm": s}; None prints n/a."""
    return [[name] + [_fmt(s.get(a)) for a in algorithms] for name, s in scores.items()]


def to_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def to_markdown(columns, rows):
    table = [list(columns)] + [list(r) for r in rows]
    widths = [max(len(str(row[j])) for row in table) for j in range(len(columns))]

    def line(cells):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"

    out = [line(table[0]), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out += [line(r) for r in table[1:]]
    return "\n".join(out) + "\n"
