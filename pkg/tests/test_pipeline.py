import csv
import json

import pytest

import neuromorphix.pipeline as pipeline
from neuromorphix.config import load_config
from neuromorphix.errors import InputError, NonFiniteFeature, StageError
from neuromorphix.features import build_matrix
from neuromorphix.synth import PlantedEffect, SynthSpec, generate_cohort, write_stats_tree

RUN_INI = """\
[run]
{source}
seed = 3
smote_stage = {stage}
train_metrics = {train_metrics}
classifiers = knn, dt, rf

[selection]
method = both
k_max = 3
k_min = 88
fixed_sfs = 2
fixed_sbe = 89
cv_sizes = 2, 4

[classifier.knn]
kind = knn
k = 3

[classifier.dt]
kind = decision_tree
max_depth = 3

[classifier.rf]
kind = random_forest
n_trees = 5
"""


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cohort")
    spec = SynthSpec(n_positive=30, n_negative=12, seed=7,
                     planted_effects=[PlantedEffect("Volume", ("Hippocampus", "Amygdala"))])
    cohort = generate_cohort(spec)
    build_matrix(cohort).to_csv(root / "features.csv")
    write_stats_tree(cohort, root / "tree")
    return root


def config(cohort_dir, tmp_path, stage="pre-split", train_metrics="resubstitution", source=None):
    source = source or f"features = {cohort_dir / 'features.csv'}"
    ini = tmp_path / "run.ini"
    ini.write_text(RUN_INI.format(source=source, stage=stage, train_metrics=train_metrics))
    return load_config(ini)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_pre_split_bundle(cohort_dir, tmp_path):
    cfg = config(cohort_dir, tmp_path)
    res = pipeline.run_pipeline(cfg, tmp_path / "out")
    s = res.summary
    assert (s["n_subjects"], s["n_features"], s["n_after_smote"]) == (42, 91, 60)
    assert (s["n_train"], s["n_test"]) == (42, 18)
    assert s["train_class_counts"] == {"no_recurrence": 21, "recurrence": 21}
    assert len(s["sfs"]["knn"]) == 3 and s["selected_features"] == s["sfs"]["knn"][:2]
    assert len(s["sbe_final_subset"]) == 88 and res.errors == []
    assert json.loads((res.out_dir / "summary.json").read_text()) == json.loads(json.dumps(s))

    reports = ["selection_curves", "optimal_subsets", "fixed_subsets", "cv_summary", "train_test_metrics",
               "roc_points", "split", "smote_provenance", "selection_trace", "selection_candidates", "rankings"]
    for name in reports:
        rows = read_csv(res.out_dir / f"{name}.csv")
        assert rows, name
        assert all(r["config_hash"] == cfg.config_hash() and r["seed"] == "3" for r in rows), name

    t4 = read_csv(res.out_dir / "fixed_subsets.csv")
    assert {(r["classifier"], r["method"]) for r in t4} == {(c, m) for c in ("knn", "dt", "rf") for m in ("SFS", "SBE")}
    assert {r["n_features"] for r in t4 if r["method"] == "SBE"} == {"89"}
    t6 = read_csv(res.out_dir / "cv_summary.csv")
    assert sorted({r["n_features"] for r in t6}) == ["2", "4"]
    t7 = read_csv(res.out_dir / "train_test_metrics.csv")
    for r in t7:
        tp, tn, fp, fn = (int(r[k]) for k in ("tp", "tn", "fp", "fn"))
        assert tp + tn + fp + fn == (42 if r["partition"] == "train" else 18)
        assert float(r["accuracy"]) == pytest.approx((tp + tn) / (tp + tn + fp + fn))
    assert len(read_csv(res.out_dir / "smote_provenance.csv")) == 18
    assert sorted(p.name for p in (res.out_dir / "models").iterdir()) == ["dt.json", "knn.json", "rf.json"]


def test_train_only_keeps_test_real(cohort_dir, tmp_path):
    cfg = config(cohort_dir, tmp_path, stage="train-only", train_metrics="cv")
    parts = pipeline.prepare_partitions(pipeline.load_features(cfg), cfg)
    assert len(parts.test) == 12 and all(not s.startswith("smote-") for s in parts.test.subject_ids)
    assert parts.train.class_counts()[0] == parts.train.class_counts()[1] == 21
    res = pipeline.run_pipeline(cfg, tmp_path / "out")
    assert res.summary["n_after_smote"] is None and res.summary["n_test"] == 12
    assert {r["partition"] for r in read_csv(res.out_dir / "train_test_metrics.csv")} == {"train", "test"}


def test_manifest_source_matches_features_csv(cohort_dir, tmp_path):
    cfg = config(cohort_dir, tmp_path, source=f"manifest = {cohort_dir / 'tree' / 'manifest.csv'}")
    a = pipeline.load_features(cfg)
    b = pipeline.load_features(config(cohort_dir, tmp_path))
    assert a.subject_ids == b.subject_ids and (a.M == b.M).all()


def test_classifier_errors_are_collected(cohort_dir, tmp_path, monkeypatch):
    real = pipeline.fit_arrays

    def flaky(spec, *args, **kw):
        if spec.kind == "decision_tree":
            raise NonFiniteFeature("injected")
        return real(spec, *args, **kw)

    monkeypatch.setattr(pipeline, "fit_arrays", flaky)
    res = pipeline.run_pipeline(config(cohort_dir, tmp_path), tmp_path / "out")
    assert [(e["classifier"], e["error"]) for e in res.errors] == [("dt", "NonFiniteFeature")]
    assert res.summary["errors"] == res.errors
    assert {r["classifier"] for r in read_csv(res.out_dir / "fixed_subsets.csv")} == {"knn", "rf"}


def test_unlabeled_subjects_stop_the_run(cohort_dir, tmp_path):
    rows = (cohort_dir / "features.csv").read_text().splitlines()
    head = rows[0].split(",")
    j = head.index("label")
    cells = rows[1].split(",")
    cells[j] = ""
    (tmp_path / "f.csv").write_text("\n".join([rows[0], ",".join(cells)] + rows[2:]) + "\n")
    cfg = config(cohort_dir, tmp_path, source=f"features = {tmp_path / 'f.csv'}")
    with pytest.raises(StageError) as e:
        pipeline.run_pipeline(cfg, tmp_path / "out")
    assert e.value.exit_code == InputError.exit_code
