"""Hemispheric asymmetry features.

For every morphometric parameter the left and right region columns
``xL``/``xR`` (same region order) are reduced to seven whole-brain scalars:

====  ==================================================================
f1    cosine similarity of ``xL`` and ``xR``
f2    dot product of the mean-normalised absolute deviation vectors
f3    min-ratio of the counts of regions above ``mean + eps`` per side
f4    min-ratio of the counts of regions below ``mean - eps`` per side
f5    mean of the entrywise ratio vector ``r = min(xL/xR, xR/xL)``
f6    population standard deviation of ``r``
f7    minimum of ``r``
====  ==================================================================

8 cortical + 5 subcortical parameters give 91 features per subject.
Canonical column order is cortical parameters first, then subcortical,
each parameter contributing f1..f7 in turn.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DegenerateMean, InputError, UnlabeledSubject, ZeroNormVector
from .ingest import CORTICAL_PARAMS, SUBCORTICAL_PARAMS, Kind, Label, SubjectScan

log = logging.getLogger(__name__)

N_FEATURES_PER_PARAM = 7

ABOVE = "above"
BELOW = "below"


@dataclass(frozen=True, order=True)
class FeatureId:
    feature_index: int
    param_label: str
    kind: Kind = field(compare=False, default=Kind.CORTICAL)

    def __str__(self):
        return f"f{self.feature_index}({self.param_label})"

    @classmethod
    def parse(cls, text: str) -> "FeatureId":
        text = text.strip()
        if not (text.startswith("f") and text.endswith(")") and "(" in text):
            raise ValueError(f"not a feature id: {text!r}")
        k, param = text[1:-1].split("(", 1)
        if param in CORTICAL_PARAMS:
            kind = Kind.CORTICAL
        elif param in SUBCORTICAL_PARAMS:
            kind = Kind.SUBCORTICAL
        else:
            raise ValueError(f"unknown parameter in feature id {text!r}")
        return cls(int(k), param, kind)


def canonical_feature_ids(cortical_params=CORTICAL_PARAMS,
                          subcortical_params=SUBCORTICAL_PARAMS) -> list[str]:
    ids = []
    for kind, params in ((Kind.CORTICAL, cortical_params), (Kind.SUBCORTICAL, subcortical_params)):
        for p in params:
            ids.extend(str(FeatureId(k, p, kind)) for k in range(1, N_FEATURES_PER_PARAM + 1))
    return ids


FEATURE_IDS = tuple(canonical_feature_ids())


@dataclass(frozen=True)
class AsymmetryConfig:
    """Knobs for the degenerate cases the feature formulas leave open.

    ``epsilon_multiplier`` scales the per-hemisphere population standard
    deviation used as the outlier cutoff (1.0 = one std).
    """

    epsilon_multiplier: float = 1.0
    zero_ratio_policy: str = "both_zero_is_one"
    sign_mismatch_policy: str = "clamp_to_zero"
    mean_guard: float = 1e-12

    def __post_init__(self):
        if not self.epsilon_multiplier > 0:
            raise InputError("epsilon_multiplier must be > 0")
        if self.mean_guard < 0:
            raise InputError("mean_guard must be >= 0")
        if self.zero_ratio_policy != "both_zero_is_one":
            raise InputError(f"unsupported zero_ratio_policy {self.zero_ratio_policy!r}")
        if self.sign_mismatch_policy != "clamp_to_zero":
            raise InputError(f"unsupported sign_mismatch_policy {self.sign_mismatch_policy!r}")


def _pair(xL, xR):
    xL = np.asarray(xL, dtype=np.float64)
    xR = np.asarray(xR, dtype=np.float64)
    if xL.shape != xR.shape or xL.ndim != 1:
        raise ValueError(f"hemisphere columns must be equal-length vectors, got {xL.shape} and {xR.shape}")
    if xL.size == 0:
        raise ValueError("hemisphere columns are empty")
    return xL, xR


def cosine_feature(xL, xR) -> float:
    xL, xR = _pair(xL, xR)
    nL = math.sqrt(float(np.dot(xL, xL)))
    nR = math.sqrt(float(np.dot(xR, xR)))
    if nL == 0 or nR == 0:
        raise ZeroNormVector("cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(xL, xR) / (nL * nR), -1.0, 1.0))


def deviation_feature(xL, xR, mean_guard: float = 1e-12) -> float:
    """Dot product of ``|mean(x) - x| / |mean(x)|`` across hemispheres."""
    xL, xR = _pair(xL, xR)
    mL, mR = xL.mean(), xR.mean()
    if abs(mL) <= mean_guard or abs(mR) <= mean_guard:
        raise DegenerateMean(f"column mean too close to zero ({mL!r}, {mR!r})")
    zL = np.abs(mL - xL) / abs(mL)
    zR = np.abs(mR - xR) / abs(mR)
    return float(np.dot(zL, zR))


def _min_ratio_counts(yL: int, yR: int) -> float:
    if yL == 0 and yR == 0:
        return 1.0
    if yL == 0 or yR == 0:
        return 0.0
    return min(yL / yR, yR / yL)


def outlier_count(x, epsilon_multiplier: float = 1.0, side: str = ABOVE) -> int:
    """Regions strictly beyond ``mean +/- epsilon_multiplier * std`` (population std)."""
    if side not in (ABOVE, BELOW):
        raise ValueError(f"side must be {ABOVE!r} or {BELOW!r}")
    x = np.asarray(x, dtype=np.float64)
    if np.ptp(x) == 0:
        return 0
    # power-of-two rescaling is exact and keeps tiny or huge columns from
    # under/overflowing in the variance
    xs = np.ldexp(x, -int(np.frexp(np.max(np.abs(x)))[1]))
    mean = xs.mean()
    eps = epsilon_multiplier * xs.std()
    d = xs - mean if side == ABOVE else mean - xs
    hits = d > eps
    # Points within rounding distance of the cutoff (every point when n == 2)
    # are decided in exact arithmetic so the strict inequality is well defined.
    near = np.abs(d - eps) <= 1e-9 * (eps + np.abs(mean) + np.abs(xs))
    if near.any():
        hits[near] = _exact_beyond(x, epsilon_multiplier, side, np.flatnonzero(near))
    return int(np.count_nonzero(hits))


def _exact_beyond(x, epsilon_multiplier, side, idx):
    F = [Fraction(v) for v in x.tolist()]
    m = sum(F) / len(F)
    k2var = Fraction(epsilon_multiplier) ** 2 * sum((v - m) ** 2 for v in F) / len(F)
    out = []
    for i in idx:
        d = F[i] - m if side == ABOVE else m - F[i]
        out.append(d > 0 and d * d > k2var)
    return out


def outlier_ratio(xL, xR, epsilon_multiplier: float = 1.0, side: str = ABOVE) -> float:
    xL, xR = _pair(xL, xR)
    return _min_ratio_counts(
        outlier_count(xL, epsilon_multiplier, side),
        outlier_count(xR, epsilon_multiplier, side),
    )


def ratio_vector(xL, xR, cfg: AsymmetryConfig | None = None, *, report=None) -> np.ndarray:
    """Entrywise ``min(xL/xR, xR/xL)`` with the zero and sign policies applied.

    ``0/0`` gives 1, ``x/0`` gives 0, and a negative ratio (sign mismatch)
    is clamped to 0. When ``report`` is a list, the indices of clamped
    entries are appended to it.
    """
    xL, xR = _pair(xL, xR)
    r = np.empty_like(xL)
    both_zero = (xL == 0) & (xR == 0)
    one_zero = (xL == 0) ^ (xR == 0)
    ok = ~(both_zero | one_zero)
    a, b = xL[ok], xR[ok]
    with np.errstate(over="ignore"):  # one quotient may overflow; the min is the other
        r[ok] = np.minimum(a / b, b / a)
    r[both_zero] = 1.0
    r[one_zero] = 0.0
    negative = r < 0
    if negative.any():
        r[negative] = 0.0
        if report is not None:
            report.extend(np.flatnonzero(negative).tolist())
    return r


def ratio_features(r) -> tuple[float, float, float]:
    r = np.asarray(r, dtype=np.float64)
    if r.size == 0:
        raise ValueError("ratio vector is empty")
    return float(r.mean()), float(r.std()), float(r.min())


@dataclass(frozen=True)
class FeatureWarning:
    subject_id: str
    feature: str
    reason: str


def parameter_features(xL, xR, cfg: AsymmetryConfig, *, subject_id="", param="",
                       warn_list=None) -> list[float]:
    """f1..f7 for one parameter column pair.

    Degenerate f1/f2 are emitted as 0 and logged to ``warn_list``.
    """
    def note(k, reason):
        if warn_list is not None:
            warn_list.append(FeatureWarning(subject_id, f"f{k}({param})", reason))

    try:
        f1 = cosine_feature(xL, xR)
    except ZeroNormVector as exc:
        f1 = 0.0
        note(1, str(exc))
    try:
        f2 = deviation_feature(xL, xR, cfg.mean_guard)
    except DegenerateMean as exc:
        f2 = 0.0
        note(2, str(exc))
    f3 = outlier_ratio(xL, xR, cfg.epsilon_multiplier, ABOVE)
    f4 = outlier_ratio(xL, xR, cfg.epsilon_multiplier, BELOW)
    clamped = []
    r = ratio_vector(xL, xR, cfg, report=clamped)
    if clamped:
        for k in (5, 6, 7):
            note(k, f"sign mismatch clamped to 0 at region indices {clamped}")
    f5, f6, f7 = ratio_features(r)
    return [f1, f2, f3, f4, f5, f6, f7]


@dataclass
class FeatureVector:
    subject_id: str
    feature_ids: tuple
    values: np.ndarray
    label: Label = Label.UNLABELED
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(zip(self.feature_ids, self.values.tolist()))

    def __getitem__(self, feature_id):
        return float(self.values[self.feature_ids.index(str(feature_id))])


def build_features(scan: SubjectScan, cfg: AsymmetryConfig | None = None) -> FeatureVector:
    cfg = cfg or AsymmetryConfig()
    ids, vals, warns = [], [], []
    for kind, left, right in scan.pairs():
        for j, param in enumerate(left.param_labels):
            vals.extend(parameter_features(left.X[:, j], right.X[:, j], cfg,
                                           subject_id=scan.subject_id, param=param,
                                           warn_list=warns))
            ids.extend(str(FeatureId(k, param, kind)) for k in range(1, N_FEATURES_PER_PARAM + 1))
    return FeatureVector(scan.subject_id, tuple(ids), np.array(vals, dtype=np.float64),
                         scan.label, warns)


@dataclass
class FeatureMatrix:
    """Subjects x features matrix with labels (1 = recurrence, 0 = none).

    ``labels`` may hold -1 for unlabelled subjects outside training mode.
    """

    subject_ids: list
    feature_ids: list
    M: np.ndarray
    labels: np.ndarray
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.subject_ids = list(self.subject_ids)
        self.feature_ids = list(self.feature_ids)
        self.M = np.asarray(self.M, dtype=np.float64).reshape(len(self.subject_ids), len(self.feature_ids))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(len(self.subject_ids))

    @property
    def shape(self):
        return self.M.shape

    def __len__(self):
        return len(self.subject_ids)

    def class_counts(self) -> dict:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def take_rows(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureMatrix([self.subject_ids[i] for i in idx], self.feature_ids,
                             self.M[idx], self.labels[idx])

    def take_features(self, feature_ids: Sequence[str]) -> "FeatureMatrix":
        cols = [self.feature_ids.index(str(f)) for f in feature_ids]
        return FeatureMatrix(self.subject_ids, [self.feature_ids[c] for c in cols],
                             self.M[:, cols], self.labels)

    def column_index(self, feature_ids: Sequence[str]) -> list[int]:
        return [self.feature_ids.index(str(f)) for f in feature_ids]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id", "label"] + self.feature_ids)
            for sid, lab, row in zip(self.subject_ids, self.labels, self.M):
                w.writerow([sid, Label(int(lab)).token] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:2] != ["subject_id", "label"]:
            raise InputError(f"{path}: feature CSV must start with subject_id,label columns")
        header, body = rows[0], rows[1:]
        for r in body:
            if len(r) != len(header):
                raise InputError(f"{path}: ragged row for subject {r[0] if r else '?'}")
        return cls(
            [r[0] for r in body],
            header[2:],
            np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64).reshape(len(body), len(header) - 2),
            [int(Label.parse(r[1])) for r in body],
        )


def build_matrix(cohort: Sequence[SubjectScan], cfg: AsymmetryConfig | None = None, *,
                 require_labels: bool = True) -> FeatureMatrix:
    """Stack per-subject feature vectors in cohort order."""
    if not cohort:
        raise InputError("cannot build a feature matrix from an empty cohort")
    cfg = cfg or AsymmetryConfig()
    rows, warns, ids = [], [], None
    for scan in cohort:
        if require_labels and scan.label is Label.UNLABELED:
            raise UnlabeledSubject(f"subject {scan.subject_id!r} has no label")
        try:
            fv = build_features(scan, cfg)
        except InputError as exc:
            raise type(exc)(f"subject {scan.subject_id!r}: {exc}") from exc
        if ids is None:
            ids = fv.feature_ids
        elif fv.feature_ids != ids:
            raise InputError(f"subject {scan.subject_id!r} yields a different feature layout")
        rows.append(fv.values)
        warns.extend(fv.warnings)
    if warns:
        log.warning("%d degenerate feature values resolved by policy (first: %s %s: %s)",
                    len(warns), warns[0].subject_id, warns[0].feature, warns[0].reason)
    return FeatureMatrix([s.subject_id for s in cohort], list(ids), np.vstack(rows),
                         [int(s.label) for s in cohort], warns)
