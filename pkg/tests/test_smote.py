import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuromorphix.errors import InputError, SingleClassInput, TooFewMinoritySamples
from neuromorphix.features import FeatureMatrix
from neuromorphix.smote import ResampleConfig, minority_neighbors, smote


def matrix(n_pos, n_neg, p=3, seed=0):
    rng = np.random.default_rng(seed)
    n = n_pos + n_neg
    return FeatureMatrix([f"s{i}" for i in range(n)], [f"x{j}" for j in range(p)],
                         rng.normal(size=(n, p)), np.array([1] * n_pos + [0] * n_neg))


def test_ten_versus_four():
    M = matrix(10, 4)
    res = smote(M, ResampleConfig(k_neighbors=3, seed=1))
    assert len(res.provenance) == 6
    assert res.matrix.class_counts() == {0: 10, 1: 10}
    assert res.matrix.subject_ids[:14] == M.subject_ids
    assert res.matrix.subject_ids[14:] == [f"smote-{i}" for i in range(1, 7)]
    # round-robin over the minority rows in order
    assert [p.source_row for p in res.provenance] == [10, 11, 12, 13, 10, 11]


def test_cohort_shape():
    res = smote(matrix(145, 24, p=5), ResampleConfig())
    assert len(res.matrix) == 290
    assert res.matrix.class_counts() == {0: 145, 1: 145}


def test_balanced_input_is_returned_unchanged():
    M = matrix(5, 5)
    res = smote(M)
    assert res.matrix is M and res.provenance == []


def test_errors():
    with pytest.raises(TooFewMinoritySamples):
        smote(matrix(10, 3), ResampleConfig(k_neighbors=3))
    M = matrix(4, 0)
    with pytest.raises(SingleClassInput):
        smote(M)
    with pytest.raises(InputError):
        ResampleConfig(k_neighbors=0)


def test_determinism_and_seed_sensitivity():
    M = matrix(20, 7)
    a = smote(M, ResampleConfig(seed=3)).matrix.M
    b = smote(M, ResampleConfig(seed=3)).matrix.M
    c = smote(M, ResampleConfig(seed=4)).matrix.M
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_neighbor_ties_go_to_lower_index():
    X = np.array([[0.0], [1.0], [-1.0], [2.0]])
    nn = minority_neighbors(X, 2)
    assert nn[0].tolist() == [1, 2]  # rows 1 and 2 are equidistant from row 0
    assert nn[1].tolist() == [0, 3]


def test_provenance_sidecar(tmp_path):
    res = smote(matrix(10, 4), ResampleConfig(k_neighbors=3))
    res.write_provenance(tmp_path / "p.csv")
    with open(tmp_path / "p.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert float(rows[0]["u"]) == res.provenance[0].u


@settings(max_examples=40, deadline=None)
@given(st.integers(6, 30), st.integers(6, 12), st.integers(1, 5), st.integers(0, 2 ** 32))
def test_property_convex_and_balanced(n_major, n_minor, k, seed):
    if n_minor > n_major:
        n_major, n_minor = n_minor, n_major
    M = matrix(n_major, n_minor, seed=seed % 1000)
    res = smote(M, ResampleConfig(k_neighbors=k, seed=seed))
    out = res.matrix
    counts = out.class_counts()
    assert counts[0] == counts[1] == n_major
    for p in res.provenance:
        a, b, x = out.M[p.source_row], out.M[p.neighbor_row], out.M[p.synthetic_row]
        assert np.all(x >= np.minimum(a, b) - 1e-12) and np.all(x <= np.maximum(a, b) + 1e-12)
        assert p.source_row != p.neighbor_row
