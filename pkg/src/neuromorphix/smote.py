"""SMOTE oversampling of the minority class."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SingleClassInput, TooFewMinoritySamples
from .features import FeatureMatrix


@dataclass(frozen=True)
class ResampleConfig:
    k_neighbors: int = 5
    target: str = "full_balance"
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if self.target != "full_balance":
            raise ConfigError(f"unsupported resampling target {self.target!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass(frozen=True)
class SyntheticProvenance:
    synthetic_row: int  # row index in the resampled matrix
    source_row: int     # row index in the input matrix
    neighbor_row: int
    u: float


@dataclass
class SmoteResult:
    matrix: FeatureMatrix
    provenance: list = field(default_factory=list)
    minority_label: int | None = None

    def write_provenance(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["synthetic_row", "source_row", "neighbor_row", "u"])
            for p in self.provenance:
                w.writerow([p.synthetic_row, p.source_row, p.neighbor_row, repr(p.u)])


def minority_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    """k nearest other rows of ``X`` (Euclidean); equal distances go to the lower index."""
    d = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1)
    np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def smote(M: FeatureMatrix, cfg: ResampleConfig | None = None) -> SmoteResult:
    """Append synthetic minority rows until both classes are equally large.

    Minority rows are visited round-robin in their original order; each
    visit draws one of the row's ``k_neighbors`` nearest minority neighbours
    and ``u ~ U[0, 1)`` and emits ``x + u * (x_nn - x)``. Original rows keep
    their order and come first. Synthetic ids are ``smote-<n>``.
    """
    cfg = cfg or ResampleConfig()
    counts = M.class_counts()
    if len(counts) != 2 or set(counts) != {0, 1}:
        raise SingleClassInput(f"SMOTE needs exactly two classes, found {sorted(counts)}")
    if counts[0] == counts[1]:
        return SmoteResult(M, [], None)
    minority = min(counts, key=lambda c: (counts[c], c))
    deficit = max(counts.values()) - counts[minority]
    min_rows = np.flatnonzero(M.labels == minority)
    if len(min_rows) <= cfg.k_neighbors:
        raise TooFewMinoritySamples(
            f"{len(min_rows)} minority rows cannot supply {cfg.k_neighbors} neighbours each"
        )

    Xmin = M.M[min_rows]
    nn = minority_neighbors(Xmin, cfg.k_neighbors)
    rng = np.random.default_rng(cfg.seed)
    new_rows = np.empty((deficit, M.M.shape[1]))
    provenance = []
    n_orig = len(M)
    for t in range(deficit):
        i = t % len(min_rows)
        j = nn[i, rng.integers(cfg.k_neighbors)]
        u = float(rng.random())
        x_i, x_nn = Xmin[i], Xmin[j]
        new_rows[t] = x_i + u * (x_nn - x_i)
        provenance.append(SyntheticProvenance(n_orig + t, int(min_rows[i]), int(min_rows[j]), u))

    width = len(str(deficit))
    ids = list(M.subject_ids) + [f"smote-{t + 1:0{width}d}" for t in range(deficit)]
    out = FeatureMatrix(ids, M.feature_ids, np.vstack([M.M, new_rows]),
                        np.concatenate([M.labels, np.full(deficit, minority)]))
    return SmoteResult(out, provenance, int(minority))
