"""Binary classifiers written from scratch.

All models score the positive class (label 1, recurrence) in ``[0, 1]``
and predict it when the score is at least 0.5.

>>> spec = KNNSpec(k=3)
>>> model = fit_arrays(spec, X, y)            # doctest: +SKIP
>>> model.predict_score(X[:2])                 # doctest: +SKIP
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.special import expit

from ..errors import ArityMismatch, ConfigError, InputError, NonFiniteFeature, SingleClassInput
from .tree import GINI, SQUARED_ERROR, Tree, TreeBuilder

MODEL_FORMAT = "neuromorphix.model"
MODEL_VERSION = 1


# -- specs ---------------------------------------------------------------------

@dataclass(frozen=True)
class KNNSpec:
    k: int = 3
    standardize: bool = False
    seed: int = 0
    kind = "knn"


@dataclass(frozen=True)
class DecisionTreeSpec:
    max_depth: int | None = None
    min_split: int = 2
    seed: int = 0
    kind = "decision_tree"


@dataclass(frozen=True)
class RandomForestSpec:
    n_trees: int = 100
    max_depth: int | None = 4
    features_per_split: str = "sqrt"
    min_split: int = 2
    seed: int = 0
    kind = "random_forest"


@dataclass(frozen=True)
class GradientBoostingSpec:
    n_stages: int = 100
    learning_rate: float = 1.0
    tree_depth: int = 3
    seed: int = 0
    kind = "gradient_boosting"


@dataclass(frozen=True)
class MajoritySpec:
    """Constant predictor; the majority-class baseline."""

    seed: int = 0
    kind = "majority"


ModelSpec = Union[KNNSpec, DecisionTreeSpec, RandomForestSpec, GradientBoostingSpec, MajoritySpec]

SPEC_TYPES = {s.kind: s for s in (KNNSpec, DecisionTreeSpec, RandomForestSpec,
                                  GradientBoostingSpec, MajoritySpec)}


def spec_to_dict(spec) -> dict:
    return {"kind": spec.kind, **asdict(spec)}


def spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        cls = SPEC_TYPES[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}") from None
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{kind}: unknown parameters {sorted(unknown)}")
    return cls(**d)


def validate_spec(spec) -> None:
    if isinstance(spec, KNNSpec) and spec.k < 1:
        raise ConfigError("knn: k must be >= 1")
    if isinstance(spec, (DecisionTreeSpec, RandomForestSpec)):
        if spec.max_depth is not None and spec.max_depth < 1:
            raise ConfigError(f"{spec.kind}: max_depth must be >= 1")
    if isinstance(spec, RandomForestSpec):
        if spec.n_trees < 1:
            raise ConfigError("random_forest: n_trees must be >= 1")
        if spec.features_per_split not in ("sqrt", "all"):
            raise ConfigError("random_forest: features_per_split must be 'sqrt' or 'all'")
    if isinstance(spec, GradientBoostingSpec):
        if spec.n_stages < 0 or spec.tree_depth < 1 or not spec.learning_rate > 0:
            raise ConfigError("gradient_boosting: need n_stages >= 0, tree_depth >= 1, learning_rate > 0")
    if spec.seed < 0:
        raise ConfigError("seed must be non-negative")


# -- models --------------------------------------------------------------------

class TrainedModel:
    """Base class. Fitted state is fixed after construction."""

    def __init__(self, spec, feature_ids, n_features):
        self.spec = spec
        self.feature_ids = list(feature_ids) if feature_ids is not None else None
        self.n_features = int(n_features)

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ArityMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X

    def predict_score(self, X) -> np.ndarray:
        return self._score(self._check(X))

    def predict_label(self, X) -> np.ndarray:
        return (self.predict_score(X) >= 0.5).astype(np.int64)

    def _score(self, X):
        raise NotImplementedError

    def state_dict(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "spec": spec_to_dict(self.spec),
            "feature_ids": self.feature_ids,
            "n_features": self.n_features,
            "state": self.state_dict(),
        }


class KNNModel(TrainedModel):
    def __init__(self, spec, feature_ids, X, y, center=None, scale=None):
        super().__init__(spec, feature_ids, X.shape[1])
        self.X = X
        self.y = y
        self.center = center
        self.scale = scale
        if spec.k > len(y):
            raise InputError(f"knn: k={spec.k} exceeds {len(y)} training rows")
        self.majority = 1 if 2 * int(y.sum()) >= len(y) else 0

    def _transform(self, X):
        if self.center is None:
            return X
        return (X - self.center) / self.scale

    def neighbors(self, X) -> np.ndarray:
        """Indices of the k nearest training rows; equal distances go to the lower index."""
        X = self._transform(self._check(X))
        train = self._transform(self.X)
        out = np.empty((X.shape[0], self.spec.k), dtype=np.int64)
        for start in range(0, X.shape[0], 256):
            chunk = X[start:start + 256]
            d = ((chunk[:, None, :] - train[None, :, :]) ** 2).sum(axis=-1)
            out[start:start + 256] = np.argsort(d, axis=1, kind="stable")[:, :self.spec.k]
        return out

    def _score(self, X):
        return self.y[self.neighbors(X)].mean(axis=1)

    def predict_label(self, X):
        s = self.predict_score(X)
        lab = (s > 0.5).astype(np.int64)
        lab[s == 0.5] = self.majority
        return lab

    def state_dict(self):
        return {
            "X": self.X.tolist(),
            "y": self.y.astype(int).tolist(),
            "center": None if self.center is None else self.center.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
        }


class TreeModel(TrainedModel):
    def __init__(self, spec, feature_ids, n_features, tree: Tree):
        super().__init__(spec, feature_ids, n_features)
        self.tree = tree

    def _score(self, X):
        return self.tree.predict(X)

    def state_dict(self):
        return {"tree": self.tree.to_dict()}


class ForestModel(TrainedModel):
    def __init__(self, spec, feature_ids, n_features, trees: Sequence[Tree]):
        super().__init__(spec, feature_ids, n_features)
        self.trees = list(trees)

    def tree_scores(self, X) -> np.ndarray:
        X = self._check(X)
        return np.vstack([t.predict(X) for t in self.trees])

    def _score(self, X):
        return np.vstack([t.predict(X) for t in self.trees]).mean(axis=0)

    def state_dict(self):
        return {"trees": [t.to_dict() for t in self.trees]}


class BoostingModel(TrainedModel):
    def __init__(self, spec, feature_ids, n_features, init_score, stages, loss_path=None):
        super().__init__(spec, feature_ids, n_features)
        self.init_score = float(init_score)
        self.stages = list(stages)
        self.loss_path = list(loss_path or [])

    def decision_function(self, X, n_stages=None) -> np.ndarray:
        X = self._check(X)
        F = np.full(X.shape[0], self.init_score)
        for tree in self.stages[:n_stages]:
            F += self.spec.learning_rate * tree.predict(X)
        return F

    def _score(self, X):
        return expit(self.decision_function(X))

    def state_dict(self):
        return {"init_score": self.init_score, "stages": [t.to_dict() for t in self.stages],
                "loss_path": self.loss_path}


class MajorityModel(TrainedModel):
    def __init__(self, spec, feature_ids, n_features, positive_fraction):
        super().__init__(spec, feature_ids, n_features)
        self.positive_fraction = float(positive_fraction)

    def _score(self, X):
        return np.full(X.shape[0], self.positive_fraction)

    def state_dict(self):
        return {"positive_fraction": self.positive_fraction}


# -- fitting -------------------------------------------------------------------

def _validate_training(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise InputError(f"design matrix {X.shape} does not match {len(y)} labels")
    if X.shape[0] < 2:
        raise InputError("need at least two training rows")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("training matrix contains NaN or infinite values")
    labels = set(np.unique(y).tolist())
    if not labels <= {0, 1}:
        raise InputError(f"labels must be 0/1, found {sorted(labels)}")
    if len(labels) < 2:
        raise SingleClassInput("training data holds a single class")
    return X, y.astype(np.float64)


def logistic_loss(y, F) -> float:
    """Mean negative log-likelihood of 0/1 labels under raw scores ``F``."""
    sign = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    return float(np.logaddexp(0.0, -sign * F).mean())


def _boosting_leaf_values(tree: Tree, leaf_of, residual, hess, y, F, lr):
    """Newton step per leaf, halved until the leaf's loss does not go up."""
    sign = 2.0 * y - 1.0
    values = tree.value.copy()
    for leaf in tree.leaves:
        rows = leaf_of == leaf
        num = residual[rows].sum()
        den = hess[rows].sum()
        gamma = num / den if den > 1e-150 else 0.0
        base = np.logaddexp(0.0, -sign[rows] * F[rows]).sum()
        for _ in range(60):
            if np.logaddexp(0.0, -sign[rows] * (F[rows] + lr * gamma)).sum() <= base:
                break
            gamma *= 0.5
        else:
            gamma = 0.0
        values[leaf] = gamma
    return values


def _fit_boosting(spec: GradientBoostingSpec, X, y, feature_ids):
    prior = y.mean()
    init = math.log(prior / (1.0 - prior))
    F = np.full(len(y), init)
    stages, losses = [], [logistic_loss(y, F)]
    builder = TreeBuilder(SQUARED_ERROR, max_depth=spec.tree_depth)
    for _ in range(spec.n_stages):
        p = expit(F)
        residual = y - p
        tree = builder.build(X, residual)
        leaf_of = tree.apply(X)
        tree.value = _boosting_leaf_values(tree, leaf_of, residual, p * (1.0 - p), y, F,
                                           spec.learning_rate)
        F = F + spec.learning_rate * tree.value[leaf_of]
        stages.append(tree)
        losses.append(logistic_loss(y, F))
    return BoostingModel(spec, feature_ids, X.shape[1], init, stages, losses)


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent stream per (seed, tree); results do not depend on fit order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(tree_index)]))


def _fit_forest(spec: RandomForestSpec, X, y, feature_ids):
    n, p = X.shape
    m = max(1, int(math.sqrt(p))) if spec.features_per_split == "sqrt" else p
    trees = []
    for t in range(spec.n_trees):
        rng = tree_rng(spec.seed, t)
        boot = rng.integers(0, n, n)
        builder = TreeBuilder(GINI, max_depth=spec.max_depth, min_split=spec.min_split,
                              max_features=m, rng=rng)
        trees.append(builder.build(X[boot], y[boot]))
    return ForestModel(spec, feature_ids, p, trees)


def fit_arrays(spec, X, y, feature_ids=None) -> TrainedModel:
    """Fit ``spec`` on a design matrix and 0/1 labels."""
    validate_spec(spec)
    X, y = _validate_training(X, y)
    if feature_ids is not None and len(feature_ids) != X.shape[1]:
        raise ArityMismatch("feature_ids length does not match the design matrix")
    if isinstance(spec, KNNSpec):
        center = scale = None
        if spec.standardize:
            center = X.mean(axis=0)
            scale = X.std(axis=0)
            scale[scale == 0] = 1.0
        return KNNModel(spec, feature_ids, X.copy(), y.copy(), center, scale)
    if isinstance(spec, DecisionTreeSpec):
        tree = TreeBuilder(GINI, max_depth=spec.max_depth, min_split=spec.min_split).build(X, y)
        return TreeModel(spec, feature_ids, X.shape[1], tree)
    if isinstance(spec, RandomForestSpec):
        return _fit_forest(spec, X, y, feature_ids)
    if isinstance(spec, GradientBoostingSpec):
        return _fit_boosting(spec, X, y, feature_ids)
    if isinstance(spec, MajoritySpec):
        return MajorityModel(spec, feature_ids, X.shape[1], y.mean())
    raise ConfigError(f"unsupported model spec {spec!r}")


def fit(spec, M) -> TrainedModel:
    """Fit on a :class:`~neuromorphix.features.FeatureMatrix`."""
    return fit_arrays(spec, M.M, M.labels, M.feature_ids)


def predict_score(model: TrainedModel, x) -> np.ndarray | float:
    scores = model.predict_score(x)
    return float(scores[0]) if np.ndim(x) == 1 else scores


def predict_label(model: TrainedModel, x):
    labels = model.predict_label(x)
    return int(labels[0]) if np.ndim(x) == 1 else labels


# -- serialization -------------------------------------------------------------

def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise InputError("not a neuromorphix model document")
    if doc.get("version") != MODEL_VERSION:
        raise InputError(f"unsupported model version {doc.get('version')}")
    spec = spec_from_dict(doc["spec"])
    ids, n, st = doc["feature_ids"], doc["n_features"], doc["state"]
    if isinstance(spec, KNNSpec):
        X = np.asarray(st["X"], dtype=np.float64).reshape(-1, n)
        return KNNModel(spec, ids, X, np.asarray(st["y"], dtype=np.float64),
                        None if st["center"] is None else np.asarray(st["center"]),
                        None if st["scale"] is None else np.asarray(st["scale"]))
    if isinstance(spec, DecisionTreeSpec):
        return TreeModel(spec, ids, n, Tree.from_dict(st["tree"]))
    if isinstance(spec, RandomForestSpec):
        return ForestModel(spec, ids, n, [Tree.from_dict(t) for t in st["trees"]])
    if isinstance(spec, GradientBoostingSpec):
        return BoostingModel(spec, ids, n, st["init_score"],
                             [Tree.from_dict(t) for t in st["stages"]], st.get("loss_path"))
    return MajorityModel(spec, ids, n, st["positive_fraction"])


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True) + "\n")


def load_model(path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text()))


__all__ = [
    "KNNSpec", "DecisionTreeSpec", "RandomForestSpec", "GradientBoostingSpec", "MajoritySpec",
    "ModelSpec", "TrainedModel", "fit", "fit_arrays", "predict_score", "predict_label",
    "spec_to_dict", "spec_from_dict", "save_model", "load_model", "model_from_dict",
    "logistic_loss", "tree_rng",
]
