"""CART trees stored as flat node arrays.

One builder serves both the Gini classification tree (leaf value = fraction
of positive samples) and the squared-error regression tree used inside
gradient boosting (leaf value = mean target, later overwritten by the
boosting step).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1

GINI = "gini"
SQUARED_ERROR = "squared_error"


@dataclass
class Tree:
    feature: np.ndarray    # split feature per node, LEAF for leaves
    threshold: np.ndarray  # go left iff x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def leaves(self):
        return np.flatnonzero(self.feature == LEAF)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):  # children are always appended after their parent
            if self.feature[node] != LEAF:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf each row of ``X`` lands in."""
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active[rows] = self.feature[node[rows]] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(v) for v in self.value],
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
            np.asarray(d["n_samples"], dtype=np.int64),
        )


def _split_costs(xs: np.ndarray, ys: np.ndarray, criterion: str) -> np.ndarray:
    """Child impurity sum for every cut between consecutive sorted rows.

    Entry ``i`` is the cost of putting rows ``0..i`` left. Cuts between equal
    feature values are +inf.
    """
    n = len(ys)
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    cum = np.cumsum(ys)[:-1]
    total = cum[-1] + ys[-1] if n > 1 else ys.sum()
    if criterion == GINI:
        # binary Gini, weighted by child size: 2 p (n - p) / n per child
        pos_r = total - cum
        cost = 2.0 * cum * (n_left - cum) / n_left + 2.0 * pos_r * (n_right - pos_r) / n_right
    else:
        # SSE = sum y^2 - S^2/n per child; sum y^2 is constant across cuts
        cost = -(cum * cum / n_left + (total - cum) ** 2 / n_right)
    cost[xs[1:] <= xs[:-1]] = np.inf
    return cost


def best_split(X: np.ndarray, y: np.ndarray, features, criterion: str, min_found: int | None = None):
    """Lowest-cost ``(feature, threshold)`` over ``features`` in the given order.

    Ties keep the earliest feature and the lowest threshold. With
    ``min_found`` set, the scan stops once that many features have yielded
    a valid cut (random-forest style feature subsampling); it keeps going
    past that point only while no valid cut has been seen.
    """
    best_cost = np.inf
    best = None
    found = 0
    for j in features:
        if min_found is not None and found >= min_found:
            break
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        if xs[0] == xs[-1]:
            continue
        cost = _split_costs(xs, y[order], criterion)
        i = int(np.argmin(cost))
        found += 1
        if cost[i] < best_cost:
            best_cost = cost[i]
            thr = (xs[i] + xs[i + 1]) / 2.0
            if thr >= xs[i + 1]:  # midpoint rounded up onto the right value
                thr = xs[i]
            best = (int(j), float(thr))
    return best


class TreeBuilder:
    """Depth-first CART growth.

    A node becomes a leaf when it is pure, holds fewer than ``min_split``
    rows, reaches ``max_depth``, or has no feature with two distinct values.
    Impure nodes are split even when the best cut does not lower impurity,
    so unlimited-depth trees fit consistent data exactly.
    """

    def __init__(self, criterion=GINI, max_depth=None, min_split=2,
                 max_features=None, rng=None):
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_split = max(2, int(min_split))
        self.max_features = max_features
        self.rng = rng

    def build(self, X: np.ndarray, y: np.ndarray) -> Tree:
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self._feature, self._threshold = [], []
        self._left, self._right = [], []
        self._value, self._n = [], []
        self._grow(X, y, np.arange(len(y)), 0)
        return Tree(
            np.asarray(self._feature, dtype=np.int64),
            np.asarray(self._threshold, dtype=np.float64),
            np.asarray(self._left, dtype=np.int64),
            np.asarray(self._right, dtype=np.int64),
            np.asarray(self._value, dtype=np.float64),
            np.asarray(self._n, dtype=np.int64),
        )

    def _new_node(self, value, n):
        self._feature.append(LEAF)
        self._threshold.append(0.0)
        self._left.append(LEAF)
        self._right.append(LEAF)
        self._value.append(value)
        self._n.append(n)
        return len(self._feature) - 1

    def _is_pure(self, ys):
        return ys[0] == ys[-1] and np.all(ys == ys[0])

    def _grow(self, X, y, idx, depth):
        ys = y[idx]
        node = self._new_node(float(ys.mean()), len(idx))
        if (len(idx) < self.min_split or self._is_pure(ys)
                or (self.max_depth is not None and depth >= self.max_depth)):
            return node
        n_features = X.shape[1]
        if self.max_features is None or self.max_features >= n_features:
            split = best_split(X[idx], ys, range(n_features), self.criterion)
        else:
            order = self.rng.permutation(n_features)
            split = best_split(X[idx], ys, order, self.criterion, min_found=self.max_features)
        if split is None:
            return node
        j, thr = split
        go_left = X[idx, j] <= thr
        self._feature[node] = j
        self._threshold[node] = thr
        self._left[node] = self._grow(X, y, idx[go_left], depth + 1)
        self._right[node] = self._grow(X, y, idx[~go_left], depth + 1)
        return node
