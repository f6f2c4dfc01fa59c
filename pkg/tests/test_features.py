import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from neuromorphix.errors import DegenerateMean, InputError, UnlabeledSubject, ZeroNormVector
from neuromorphix.features import (
    ABOVE,
    BELOW,
    FEATURE_IDS,
    AsymmetryConfig,
    FeatureId,
    FeatureMatrix,
    build_features,
    build_matrix,
    cosine_feature,
    deviation_feature,
    outlier_count,
    outlier_ratio,
    parameter_features,
    ratio_features,
    ratio_vector,
)
from neuromorphix.ingest import Kind, Label
from neuromorphix.synth import SynthSpec, generate_cohort


# -- frozen worked examples ----------------------------------------------------

def test_cosine_examples():
    assert cosine_feature([1, 2, 2], [2, 1, 2]) == pytest.approx(8 / 9, abs=1e-15)
    assert cosine_feature([1, 0], [0, 1]) == 0.0
    assert cosine_feature([3, 4, 5], [3, 4, 5]) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ZeroNormVector):
        cosine_feature([0, 0], [1, 2])


def test_deviation_examples():
    assert deviation_feature([1, 2, 3], [2, 4, 6]) == pytest.approx(0.5, abs=1e-15)
    assert deviation_feature([1, 3], [1, 3]) == pytest.approx(0.5, abs=1e-15)
    assert deviation_feature([4, 4, 4], [1, 7, 2]) == 0.0
    with pytest.raises(DegenerateMean):
        deviation_feature([-1, 1], [1, 2])


def test_outlier_examples():
    assert outlier_count([0, 0, 0, 0, 10]) == 1
    assert outlier_count([0, 0, 0, 10, 10]) == 2
    assert outlier_ratio([0, 0, 0, 0, 10], [0, 0, 0, 10, 10]) == 0.5
    assert outlier_ratio([5, 5, 5], [2, 2, 2]) == 1.0
    assert outlier_ratio([0, 0, 0, 0, 10], [1, 1, 1, 1, 1]) == 0.0
    assert outlier_count([10, 0, 0, 0, 0], side=BELOW) == 0
    assert outlier_count([0, 10, 10, 10, 10], side=BELOW) == 1


def test_outlier_count_two_points_never_beyond_one_std():
    # with two points each sits exactly one std from the mean
    for a, b in [(0.1, 0.7), (1e-3, 3.3), (2.0, 5.0)]:
        assert outlier_count([a, b], side=ABOVE) == 0
        assert outlier_count([a, b], side=BELOW) == 0
        assert outlier_count([a, b], 0.5, ABOVE) == 1


def test_outlier_count_extreme_magnitudes():
    # the squared deviations under/overflow unless the column is rescaled
    for s in (1e-197, 1e200):
        assert outlier_count([0.0, 4.1 * s]) == 0
        assert outlier_count([0.0, 0.0, 0.0, 0.0, 10 * s]) == 1


def test_ratio_examples():
    np.testing.assert_array_equal(ratio_vector([1, 2], [2, 2]), [0.5, 1.0])
    np.testing.assert_array_equal(ratio_vector([3, 0, 0], [-3, 0, 4]), [0.0, 1.0, 0.0])
    assert ratio_features([0.5, 1.0]) == (0.75, 0.25, 0.5)
    assert ratio_features([1, 1, 1]) == (1.0, 0.0, 1.0)
    assert ratio_features([0, 0, 0]) == (0.0, 0.0, 0.0)


def test_ratio_vector_reports_clamped_entries():
    seen = []
    ratio_vector([1, -2, 3], [1, 2, -3], report=seen)
    assert seen == [1, 2]


def test_config_validation():
    with pytest.raises(InputError):
        AsymmetryConfig(epsilon_multiplier=0)
    with pytest.raises(InputError):
        AsymmetryConfig(zero_ratio_policy="other")


# -- feature ids -----------------------------------------------------------------

def test_feature_ids_are_canonical():
    assert len(FEATURE_IDS) == len(set(FEATURE_IDS)) == 91
    assert FEATURE_IDS[:7] == tuple(f"f{k}(SurfArea)" for k in range(1, 8))
    assert FEATURE_IDS[56] == "f1(NVoxels)"
    assert FEATURE_IDS[-1] == "f7(normMax)"
    fid = FeatureId.parse("f4(FoldInd)")
    assert (fid.feature_index, fid.param_label, fid.kind) == (4, "FoldInd", Kind.CORTICAL)
    assert str(fid) == "f4(FoldInd)"
    assert FeatureId.parse("f2(Volume)").kind is Kind.SUBCORTICAL
    with pytest.raises(ValueError):
        FeatureId.parse("f2(Nope)")


# -- properties ------------------------------------------------------------------

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)
positive = st.floats(min_value=1e-3, max_value=1e4, allow_nan=False, allow_infinity=False)


@st.composite
def column_pairs(draw, elements=finite):
    n = draw(st.integers(2, 40))
    xL = draw(st.lists(elements, min_size=n, max_size=n))
    xR = draw(st.lists(elements, min_size=n, max_size=n))
    return np.array(xL), np.array(xR)


@settings(max_examples=300, deadline=None)
@given(column_pairs())
def test_property_matches_oracle(pair):
    xL, xR = pair
    got = parameter_features(xL, xR, AsymmetryConfig())
    want = oracles.seven_features(xL.tolist(), xR.tolist())
    for g, w in zip(got, want):
        assert abs(g - w) <= 1e-9 * max(1.0, abs(w))


@settings(max_examples=300, deadline=None)
@given(column_pairs())
def test_property_swap_and_bounds(pair):
    xL, xR = pair
    a = parameter_features(xL, xR, AsymmetryConfig())
    b = parameter_features(xR, xL, AsymmetryConfig())
    assert all(abs(u - v) <= 1e-12 * max(1.0, abs(u)) for u, v in zip(a, b))
    assert all(0.0 <= a[k] <= 1.0 for k in (2, 3, 4, 6))
    assert -1.0 <= a[0] <= 1.0 and a[1] >= 0.0 and 0.0 <= a[5] <= 0.5


@settings(max_examples=200, deadline=None)
@given(column_pairs(positive), st.integers(-10, 10))
def test_property_power_of_two_scaling(pair, e):
    xL, xR = pair
    c = 2.0 ** e
    a = parameter_features(xL, xR, AsymmetryConfig())
    b = parameter_features(c * xL, c * xR, AsymmetryConfig())
    assert all(abs(u - v) <= 1e-12 * max(1.0, abs(u)) for u, v in zip(a, b))
    assert a[0] >= 0.0


@settings(max_examples=100, deadline=None)
@given(column_pairs(positive), st.floats(0.25, 3.0))
def test_property_outlier_counts_exact(pair, k):
    xL, _ = pair
    for side in (ABOVE, BELOW):
        assert outlier_count(xL, k, side) == oracles.count_beyond(xL.tolist(), k, side)


# -- subject level ---------------------------------------------------------------

@pytest.fixture(scope="module")
def cohort():
    return generate_cohort(SynthSpec(n_positive=4, n_negative=3, seed=2))


def test_build_features_shape_and_order(cohort):
    fv = build_features(cohort[0])
    assert fv.feature_ids == FEATURE_IDS
    assert fv.values.shape == (91,)
    assert fv["f1(SurfArea)"] == fv.values[0]


def test_symmetric_scan_gives_identity_features(cohort):
    s = cohort[0]
    sym = type(s)(s.subject_id, s.cortical_left, s.cortical_left.__class__(
        s.cortical_right.hemisphere, s.cortical_left.kind, s.cortical_left.region_labels,
        s.cortical_left.param_labels, s.cortical_left.X),
        s.subcortical_left, s.subcortical_left.__class__(
        s.subcortical_right.hemisphere, s.subcortical_left.kind, s.subcortical_left.region_labels,
        s.subcortical_left.param_labels, s.subcortical_left.X), s.label)
    fv = build_features(sym)
    for fid, v in fv.as_dict().items():
        k = FeatureId.parse(fid).feature_index
        if k == 2:
            continue
        expect = {1: 1.0, 3: 1.0, 4: 1.0, 5: 1.0, 6: 0.0, 7: 1.0}[k]
        assert v == pytest.approx(expect, abs=1e-12), fid


def test_halved_left_volume_gives_half_min_ratio(cohort):
    s = cohort[1]
    left = s.subcortical_left
    X = s.subcortical_right.X.copy()
    j = left.param_labels.index("Volume")
    X_left = X.copy()
    X_left[left.region_labels.index("Hippocampus"), j] *= 0.5
    new_left = type(left)(left.hemisphere, left.kind, left.region_labels, left.param_labels, X_left)
    new_right = type(left)(s.subcortical_right.hemisphere, left.kind, left.region_labels, left.param_labels, X)
    scan = type(s)(s.subject_id, s.cortical_left, s.cortical_right, new_left, new_right, s.label)
    assert build_features(scan)["f7(Volume)"] == pytest.approx(0.5, abs=1e-15)


def test_degenerate_columns_emit_zero_and_warn(cohort):
    warns = []
    vals = parameter_features(np.zeros(5), np.ones(5), AsymmetryConfig(), subject_id="s", param="P",
                              warn_list=warns)
    assert vals[0] == 0.0 and vals[1] == 0.0
    assert {w.feature for w in warns} == {"f1(P)", "f2(P)"}


def test_build_matrix_and_csv_round_trip(cohort, tmp_path):
    M = build_matrix(cohort)
    assert M.shape == (7, 91)
    assert M.class_counts() == {0: 3, 1: 4}
    M.to_csv(tmp_path / "f.csv")
    back = FeatureMatrix.from_csv(tmp_path / "f.csv")
    assert back.subject_ids == M.subject_ids and back.feature_ids == M.feature_ids
    np.testing.assert_array_equal(back.M, M.M)
    np.testing.assert_array_equal(back.labels, M.labels)
    assert build_matrix(cohort[:1]).shape == (1, 91)


def test_build_matrix_rejects_unlabeled(cohort):
    bad = [cohort[0].with_label(Label.UNLABELED)] + cohort[1:]
    with pytest.raises(UnlabeledSubject):
        build_matrix(bad)
    assert build_matrix(bad, require_labels=False).shape == (7, 91)


def test_oracle_self_check():
    # the oracle reproduces the worked examples too
    assert math.isclose(oracles.cosine([1, 2, 2], [2, 1, 2]), 8 / 9)
    assert oracles.count_ratio(1, 2) == 0.5
