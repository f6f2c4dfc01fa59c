"""Sequential forward selection / backward elimination around a wrapped learner.

Candidates are always scored in canonical feature order (the column order
of the input matrix) and the first best score wins, so ties go to the lower
feature index. Every step keeps the full candidate score list.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, WrongTraceKind
from .evaluation import cross_validate_arrays, stratified_folds
from .features import FeatureMatrix

SFS = "SFS"
SBE = "SBE"


@dataclass(frozen=True)
class SelectionStep:
    feature_id: str
    cv_accuracy: float
    subset_size: int
    candidates: tuple  # ((feature_id, cv_accuracy), ...) in canonical order


@dataclass
class SelectionTrace:
    method: str
    wrapper: object
    feature_pool: list
    steps: list = field(default_factory=list)
    initial_accuracy: float | None = None  # SBE: accuracy of the full set

    @property
    def final_subset(self) -> list:
        if self.method == SFS:
            return [s.feature_id for s in self.steps]
        removed = {s.feature_id for s in self.steps}
        return [f for f in self.feature_pool if f not in removed]

    def subset_after(self, t: int) -> list:
        if self.method == SFS:
            return [s.feature_id for s in self.steps[:t]]
        removed = {s.feature_id for s in self.steps[:t]}
        return [f for f in self.feature_pool if f not in removed]

    def curve(self) -> list[tuple[int, float]]:
        """``(subset size, CV accuracy)`` pairs, i.e. accuracy versus number of features."""
        pts = [(s.subset_size, s.cv_accuracy) for s in self.steps]
        if self.method == SBE and self.initial_accuracy is not None:
            pts.insert(0, (len(self.feature_pool), self.initial_accuracy))
        return sorted(pts)

    def best_size(self) -> int:
        """Smallest subset size attaining the highest CV accuracy on the curve."""
        pts = self.curve()
        top = max(a for _, a in pts)
        return min(n for n, a in pts if a == top)

    def write_csv(self, path, extra=None) -> None:
        extra = extra or {}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "feature_id", "subset_size", "cv_accuracy", *extra])
            for t, s in enumerate(self.steps, start=1):
                w.writerow([t, s.feature_id, s.subset_size, repr(s.cv_accuracy), *extra.values()])


class _Scorer:
    """CV accuracy of the wrapper on a column subset, with fixed folds."""

    def __init__(self, M: FeatureMatrix, wrapper, cv_folds: int, seed: int):
        self.X = M.M
        self.y = M.labels
        self.wrapper = wrapper
        self.folds = cv_folds
        self.fold_of = stratified_folds(self.y, cv_folds, seed)

    def __call__(self, cols) -> float:
        return cross_validate_arrays(self.X[:, list(cols)], self.y, self.wrapper,
                                     self.folds, fold_of=self.fold_of).mean_accuracy


def sfs(M: FeatureMatrix, wrapper, k_max: int, cv_folds: int = 5, seed: int = 0) -> SelectionTrace:
    """Greedy forward selection up to ``k_max`` features."""
    p = len(M.feature_ids)
    if not 1 <= k_max <= p:
        raise InputError(f"k_max must lie in 1..{p}, got {k_max}")
    score = _Scorer(M, wrapper, cv_folds, seed)
    trace = SelectionTrace(SFS, wrapper, list(M.feature_ids))
    chosen = []
    while len(chosen) < k_max:
        cands = [(j, score(chosen + [j])) for j in range(p) if j not in chosen]
        best_j, best_acc = max(cands, key=lambda c: c[1])  # max keeps the first maximum
        chosen.append(best_j)
        trace.steps.append(SelectionStep(
            M.feature_ids[best_j], best_acc, len(chosen),
            tuple((M.feature_ids[j], a) for j, a in cands),
        ))
    return trace


def sbe(M: FeatureMatrix, wrapper, k_min: int, cv_folds: int = 5, seed: int = 0) -> SelectionTrace:
    """Greedy backward elimination down to ``k_min`` features."""
    p = len(M.feature_ids)
    if not 1 <= k_min <= p:
        raise InputError(f"k_min must lie in 1..{p}, got {k_min}")
    score = _Scorer(M, wrapper, cv_folds, seed)
    remaining = list(range(p))
    trace = SelectionTrace(SBE, wrapper, list(M.feature_ids), initial_accuracy=score(remaining))
    while len(remaining) > k_min:
        cands = [(j, score([r for r in remaining if r != j])) for j in remaining]
        best_j, best_acc = max(cands, key=lambda c: c[1])
        remaining.remove(best_j)
        trace.steps.append(SelectionStep(
            M.feature_ids[best_j], best_acc, len(remaining),
            tuple((M.feature_ids[j], a) for j, a in cands),
        ))
    return trace


def rank_features(trace: SelectionTrace) -> list[tuple[str, int]]:
    """``(feature_id, rank)`` for the whole pool; rank 1 entered first.

    Features never selected follow in canonical order.
    """
    if trace.method != SFS:
        raise WrongTraceKind("feature ranking needs a forward-selection trace")
    order = [s.feature_id for s in trace.steps]
    seen = set(order)
    order += [f for f in trace.feature_pool if f not in seen]
    return [(f, r) for r, f in enumerate(order, start=1)]


def prefix_curve(M: FeatureMatrix, ordered_features, spec, sizes=None, cv_folds=5, seed=0):
    """CV accuracy of ``spec`` on the first n features of a ranking, for each n."""
    sizes = sizes or range(1, len(ordered_features) + 1)
    cols = M.column_index(ordered_features)
    fold_of = stratified_folds(M.labels, cv_folds, seed)
    out = []
    for n in sizes:
        res = cross_validate_arrays(M.M[:, cols[:n]], M.labels, spec, cv_folds, fold_of=fold_of)
        out.append((n, res.mean_accuracy))
    return out


def pad_subset(ranked, pool, size: int, seed: int) -> list:
    """Extend ``ranked`` to ``size`` features with a seeded random draw from the rest of ``pool``."""
    base = list(ranked[:size])
    rest = [f for f in pool if f not in base]
    need = size - len(base)
    if need > len(rest):
        raise InputError(f"cannot build a {size}-feature subset from {len(pool)} features")
    rng = np.random.default_rng(seed)
    extra = [rest[i] for i in sorted(rng.choice(len(rest), size=need, replace=False))] if need > 0 else []
    return base + extra
