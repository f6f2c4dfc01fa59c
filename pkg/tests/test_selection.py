import csv
import itertools

import numpy as np
import pytest

from neuromorphix.errors import InputError, WrongTraceKind
from neuromorphix.evaluation import cross_validate_arrays, stratified_folds
from neuromorphix.features import FeatureMatrix
from neuromorphix.learners import DecisionTreeSpec, KNNSpec
from neuromorphix.selection import SBE, pad_subset, prefix_curve, rank_features, sbe, sfs


def planted(n=40, p=5, informative=2, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array([1] * (n // 2) + [0] * (n - n // 2))
    X = rng.normal(size=(n, p))
    X[:, informative] += 3.0 * y
    return FeatureMatrix([f"s{i}" for i in range(n)], [f"x{j}" for j in range(p)], X, y)


def test_single_separator_chosen_first():
    M = planted(informative=3)
    trace = sfs(M, KNNSpec(k=3), k_max=2, seed=1)
    assert trace.steps[0].feature_id == "x3"
    assert len(trace.steps[0].candidates) == 5 and len(trace.steps[1].candidates) == 4
    assert [s.subset_size for s in trace.steps] == [1, 2]


def test_full_forward_run_is_a_permutation():
    M = planted(p=4)
    trace = sfs(M, KNNSpec(), k_max=4)
    assert sorted(trace.final_subset) == sorted(M.feature_ids)
    ranks = rank_features(trace)
    assert [r for _, r in ranks] == [1, 2, 3, 4]


def test_backward_bounds():
    M = planted(p=4)
    assert sbe(M, KNNSpec(), k_min=4).steps == []
    trace = sbe(M, KNNSpec(), k_min=1)
    assert len(trace.steps) == 3
    assert len(trace.final_subset) == 1
    assert trace.curve()[-1][0] == 4
    assert trace.subset_after(0) == M.feature_ids
    with pytest.raises(InputError):
        sbe(M, KNNSpec(), k_min=0)
    with pytest.raises(InputError):
        sfs(M, KNNSpec(), k_max=5)


def test_rank_features_covers_pool():
    M = planted(p=35, n=30)
    trace = sfs(M, DecisionTreeSpec(max_depth=1), k_max=3)
    ranks = rank_features(trace)
    assert [r for _, r in ranks] == list(range(1, 36))
    assert [f for f, _ in ranks[:3]] == trace.final_subset
    assert sorted(f for f, _ in ranks) == sorted(M.feature_ids)
    with pytest.raises(WrongTraceKind):
        rank_features(sbe(planted(p=3), KNNSpec(), k_min=2))


def test_each_step_is_the_best_candidate():
    M = planted(p=5, seed=3)
    spec = KNNSpec(k=3)
    fold_of = stratified_folds(M.labels, 5, 0)

    def score(cols):
        return cross_validate_arrays(M.M[:, list(cols)], M.labels, spec, 5, fold_of=fold_of).mean_accuracy

    trace = sfs(M, spec, k_max=3)
    chosen = []
    for step in trace.steps:
        cands = [j for j in range(5) if j not in chosen]
        scores = [score(chosen + [j]) for j in cands]
        best = cands[int(np.argmax(scores))]
        assert step.feature_id == f"x{best}" and step.cv_accuracy == max(scores)
        chosen.append(best)
    # the greedy pair is no better than the best pair found by brute force
    brute = max(score(c) for c in itertools.combinations(range(5), 2))
    assert trace.steps[1].cv_accuracy <= brute


def test_ties_go_to_lower_index():
    n = 20
    y = np.array([1] * 10 + [0] * 10)
    X = np.column_stack([y, y, y]).astype(float)
    M = FeatureMatrix([f"s{i}" for i in range(n)], ["a", "b", "c"], X, y)
    assert sfs(M, KNNSpec(), k_max=1).steps[0].feature_id == "a"
    assert sbe(M, KNNSpec(), k_min=2).steps[0].feature_id == "a"


def test_prefix_curve_and_best_size():
    M = planted(p=5)
    trace = sfs(M, KNNSpec(), k_max=5)
    curve = prefix_curve(M, trace.final_subset, KNNSpec())
    assert [n for n, _ in curve] == [1, 2, 3, 4, 5]
    # prefix curve with the wrapper reproduces the trace's own scores
    assert [a for _, a in curve] == [s.cv_accuracy for s in trace.steps]
    top = max(a for _, a in trace.curve())
    assert trace.curve()[trace.best_size() - 1][1] == top


def test_pad_subset():
    pool = [f"x{j}" for j in range(10)]
    out = pad_subset(["x3", "x7"], pool, 5, seed=4)
    assert out[:2] == ["x3", "x7"] and len(set(out)) == 5 and set(out) <= set(pool)
    assert out == pad_subset(["x3", "x7"], pool, 5, seed=4)
    assert pad_subset(["x3", "x7", "x1"], pool, 2, seed=0) == ["x3", "x7"]
    with pytest.raises(InputError):
        pad_subset([], pool, 11, seed=0)


def test_write_csv(tmp_path):
    trace = sbe(planted(p=3), KNNSpec(), k_min=1)
    assert trace.method == SBE
    trace.write_csv(tmp_path / "t.csv", extra={"seed": 9})
    with open(tmp_path / "t.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["subset_size"]) for r in rows] == [2, 1]
    assert all(r["seed"] == "9" for r in rows)
    assert float(rows[0]["cv_accuracy"]) == trace.steps[0].cv_accuracy
