"""Splits, cross-validation and classification metrics.

Positive class is label 1 (recurrence). Confusion counts threshold scores
at 0.5 through the model's own ``predict_label``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

from .errors import ClassTooSmall, SingleClassInput, UndefinedMetric
from .features import FeatureMatrix
from .learners import fit_arrays


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionCounts":
        y_true = np.asarray(y_true).astype(bool)
        y_pred = np.asarray(y_pred).astype(bool)
        return cls(
            int(np.sum(y_true & y_pred)),
            int(np.sum(~y_true & ~y_pred)),
            int(np.sum(~y_true & y_pred)),
            int(np.sum(y_true & ~y_pred)),
        )


def _ratio(num, den, name, exact):
    if den == 0:
        raise UndefinedMetric(f"{name} undefined: zero denominator")
    return Fraction(num, den) if exact else num / den


def accuracy(c: ConfusionCounts, exact=False):
    return _ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn, "accuracy", exact)


def sensitivity(c: ConfusionCounts, exact=False):
    return _ratio(c.tp, c.tp + c.fn, "sensitivity", exact)


def specificity(c: ConfusionCounts, exact=False):
    return _ratio(c.tn, c.fp + c.tn, "specificity", exact)


def f1_score(c: ConfusionCounts, exact=False):
    return _ratio(2 * c.tp, c.fp + 2 * c.tp + c.fn, "f1", exact)


METRICS = {"accuracy": accuracy, "sensitivity": sensitivity,
           "specificity": specificity, "f1": f1_score}


def metrics(counts: ConfusionCounts, exact: bool = False) -> dict:
    """All four count-based metrics; undefined ones come back as ``None``."""
    out = {}
    for name, fn in METRICS.items():
        try:
            out[name] = fn(counts, exact)
        except UndefinedMetric:
            out[name] = None
    return out


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks for tied scores."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput("AUROC needs both classes")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels):
    """ROC points ``(fpr, tpr, threshold)`` from the highest threshold down."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput("ROC needs both classes")
    points = [(0.0, 0.0, math.inf)]
    for thr in np.unique(scores)[::-1]:
        pred = scores >= thr
        points.append((float((pred & ~labels).sum() / n_neg),
                       float((pred & labels).sum() / n_pos), float(thr)))
    return points


# -- splitting -----------------------------------------------------------------

def _class_rows(labels, rng):
    out = {}
    for c in (0, 1):
        rows = np.flatnonzero(labels == c)
        out[c] = rows[rng.permutation(len(rows))]
    return out


def split_70_30(M: FeatureMatrix, seed: int = 0, train_fraction: float = 0.7):
    """Stratified random split into ``(train, test)``.

    The training set gets ``ceil(0.7 n)`` rows. The test allocation is split
    across classes by largest remainder; a tied remainder goes to class 0
    first, so 145/145 yields a test set of 43 positives and 44 negatives.
    """
    train_idx, test_idx = split_indices(M.labels, seed, train_fraction)
    return M.take_rows(train_idx), M.take_rows(test_idx)


def split_indices(labels, seed: int = 0, train_fraction: float = 0.7):
    labels = np.asarray(labels)
    counts = {c: int(np.sum(labels == c)) for c in (0, 1)}
    if min(counts.values()) < 2:
        raise ClassTooSmall(f"each class needs >= 2 rows for a stratified split, got {counts}")
    n = len(labels)
    n_test = n - math.ceil(round(train_fraction * n, 9))
    quota = {c: Fraction(counts[c] * n_test, n) for c in (0, 1)}
    alloc = {c: math.floor(quota[c]) for c in (0, 1)}
    for c in sorted((0, 1), key=lambda c: (-(quota[c] - alloc[c]), c)):
        if sum(alloc.values()) < n_test:
            alloc[c] += 1
    for c in (0, 1):  # keep both classes on both sides
        alloc[c] = min(max(alloc[c], 1), counts[c] - 1)
    rng = np.random.default_rng(seed)
    rows = _class_rows(labels, rng)
    test = np.sort(np.concatenate([rows[c][:alloc[c]] for c in (0, 1)]))
    train = np.sort(np.concatenate([rows[c][alloc[c]:] for c in (0, 1)]))
    return train, test


def stratified_folds(labels, n_folds: int = 5, seed: int = 0) -> np.ndarray:
    """Fold index per row.

    Rows are shuffled within class, laid out class 0 then class 1, and dealt
    to folds in turn, so per-class and total fold sizes differ by at most one.
    """
    labels = np.asarray(labels)
    counts = {c: int(np.sum(labels == c)) for c in np.unique(labels)}
    if len(counts) < 2:
        raise SingleClassInput("cross-validation needs both classes")
    if min(counts.values()) < n_folds:
        raise ClassTooSmall(f"each class needs >= {n_folds} rows for {n_folds}-fold CV, got {counts}")
    rng = np.random.default_rng(seed)
    rows = _class_rows(labels, rng)
    order = np.concatenate([rows[0], rows[1]])
    fold = np.empty(len(labels), dtype=np.int64)
    fold[order] = np.arange(len(order)) % n_folds
    return fold


@dataclass(frozen=True)
class CVResult:
    mean_accuracy: float
    std_accuracy: float
    per_fold: tuple


def cross_validate_arrays(X, y, spec, folds: int = 5, seed: int = 0, fold_of=None) -> CVResult:
    y = np.asarray(y)
    if fold_of is None:
        fold_of = stratified_folds(y, folds, seed)
    accs = []
    for k in range(folds):
        test = fold_of == k
        model = fit_arrays(spec, X[~test], y[~test])
        pred = model.predict_label(X[test])
        accs.append(float(np.mean(pred == y[test])))
    a = np.asarray(accs)
    return CVResult(float(a.mean()), float(a.std()), tuple(accs))


def cross_validate(M: FeatureMatrix, spec, folds: int = 5, seed: int = 0) -> CVResult:
    """Stratified k-fold accuracy: mean, population std and per-fold values."""
    return cross_validate_arrays(M.M, M.labels, spec, folds, seed)


# -- reports -------------------------------------------------------------------

@dataclass
class EvalReport:
    auroc: float | None
    accuracy: float | None
    sensitivity: float | None
    specificity: float | None
    f1: float | None
    counts: ConfusionCounts
    split: str
    seed: int
    scores: tuple = ()
    labels: tuple = ()

    def to_dict(self, include_scores=False) -> dict:
        d = asdict(self)
        if not include_scores:
            d.pop("scores")
            d.pop("labels")
        return d


def evaluate(model, X, y, split: str = "test", seed: int = 0) -> EvalReport:
    y = np.asarray(y).astype(np.int64)
    scores = model.predict_score(X)
    pred = model.predict_label(X)
    counts = ConfusionCounts.from_labels(y, pred)
    m = metrics(counts)
    try:
        auc = auroc(scores, y)
    except SingleClassInput:
        auc = None
    return EvalReport(auc, m["accuracy"], m["sensitivity"], m["specificity"], m["f1"],
                      counts, split, seed, tuple(float(s) for s in scores), tuple(int(v) for v in y))
