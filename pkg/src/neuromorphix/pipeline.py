"""End-to-end run: features -> SMOTE -> split -> selection -> train/test + CV -> reports.

Every CSV row in a report bundle carries the config hash and run seed.
Nothing time- or host-dependent is written, so identical config and inputs
give byte-identical bundles.
"""

from __future__ import annotations

import csv
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import InputError, NeuroMorphixError, StageError
from .evaluation import (
    ConfusionCounts,
    EvalReport,
    auroc,
    cross_validate_arrays,
    evaluate,
    metrics,
    roc_curve,
    split_indices,
    stratified_folds,
)
from .features import FeatureMatrix, build_matrix
from .ingest import Label, load_cohort
from .learners import fit_arrays, save_model, spec_to_dict
from .selection import SBE, SFS, pad_subset, prefix_curve, rank_features, sbe, sfs
from .smote import smote

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("auroc", "accuracy", "sensitivity", "specificity", "f1")


@contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except NeuroMorphixError as exc:
        raise StageError(name, exc) from exc
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _Writer:
    def __init__(self, out_dir: Path, cfg_hash: str, seed: int):
        self.out = out_dir
        self.tag = {"config_hash": cfg_hash, "seed": seed}

    def csv(self, name, header, rows):
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(header) + list(self.tag))
            for r in rows:
                w.writerow([_fmt(v) for v in r] + [_fmt(v) for v in self.tag.values()])
        return path

    def json(self, name, obj):
        path = self.out / name
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
        return path


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def load_features(cfg: PipelineConfig) -> FeatureMatrix:
    if cfg.features:
        M = FeatureMatrix.from_csv(cfg.resolve(cfg.features))
    else:
        cohort = load_cohort(cfg.resolve(cfg.manifest), lenient=cfg.lenient)
        M = build_matrix(cohort, cfg.asymmetry)
    if np.any(M.labels == int(Label.UNLABELED)):
        raise InputError("the run needs every subject labelled")
    return M


@dataclass
class RunResult:
    out_dir: Path
    summary: dict
    sfs_trace: object = None
    sbe_trace: object = None
    errors: list = field(default_factory=list)


def _metric_row(rep):
    return [rep.auroc, rep.accuracy, rep.sensitivity, rep.specificity, rep.f1]


def _oof_report(X, y, spec, folds, seed, split_name):
    """Metrics from out-of-fold predictions on the training set."""
    fold_of = stratified_folds(y, folds, seed)
    scores = np.empty(len(y))
    labels = np.empty(len(y), dtype=np.int64)
    for k in range(folds):
        test = fold_of == k
        model = fit_arrays(spec, X[~test], y[~test])
        scores[test] = model.predict_score(X[test])
        labels[test] = model.predict_label(X[test])
    counts = ConfusionCounts.from_labels(y, labels)
    m = metrics(counts)
    return EvalReport(auroc(scores, y), m["accuracy"], m["sensitivity"], m["specificity"], m["f1"],
                      counts, split_name, seed, tuple(scores.tolist()), tuple(int(v) for v in y))


@dataclass
class Partitions:
    """Modelling data after oversampling and the stratified split."""
    full: FeatureMatrix        # labelled cohort before oversampling
    resampled: object          # SmoteResult
    train: FeatureMatrix
    test: FeatureMatrix


def prepare_partitions(M0: FeatureMatrix, cfg: PipelineConfig) -> Partitions:
    """Oversample and split according to ``cfg.smote_stage``."""
    if cfg.smote_stage == "pre-split":
        res = smote(M0, cfg.smote)
        tr_idx, te_idx = split_indices(res.matrix.labels, cfg.seed)
        return Partitions(M0, res, res.matrix.take_rows(tr_idx), res.matrix.take_rows(te_idx))
    tr_idx, te_idx = split_indices(M0.labels, cfg.seed)
    res = smote(M0.take_rows(tr_idx), cfg.smote)
    return Partitions(M0, res, res.matrix, M0.take_rows(te_idx))


def write_partitions(parts: Partitions, W: _Writer) -> None:
    prov = parts.resampled.provenance
    W.csv("smote_provenance.csv", ["synthetic_row", "source_row", "neighbor_row", "u"],
          [(p.synthetic_row, p.source_row, p.neighbor_row, p.u) for p in prov])
    rows = []
    for part, M in (("train", parts.train), ("test", parts.test)):
        rows.extend((s, Label(int(l)).token, part) for s, l in zip(M.subject_ids, M.labels))
    W.csv("split.csv", ["subject_id", "label", "partition"], rows)


def run_selection(train: FeatureMatrix, cfg: PipelineConfig, W: _Writer | None = None):
    """SFS per wrapper and/or SBE with the configured wrapper, on the training partition.

    Returns ``(sfs_traces, sbe_trace)`` where ``sfs_traces`` maps classifier
    name to its forward trace.
    """
    sel, specs, seed = cfg.selection, cfg.classifiers, cfg.seed
    p = len(train.feature_ids)
    sfs_traces, sbe_trace = {}, None
    if sel.method in ("sfs", "both"):
        for name in (list(specs) if sel.per_classifier else [sel.wrapper]):
            sfs_traces[name] = sfs(train, specs[name], min(sel.k_max, p), sel.cv_folds, seed)
    if sel.method in ("sbe", "both"):
        sbe_trace = sbe(train, specs[sel.wrapper], min(sel.k_min, p), sel.cv_folds, seed)
    if W is None:
        return sfs_traces, sbe_trace

    trace_rows, cand_rows, rank_rows = [], [], []
    for name, tr in sfs_traces.items():
        for t, s in enumerate(tr.steps, 1):
            trace_rows.append((SFS, name, t, s.feature_id, s.subset_size, s.cv_accuracy))
            cand_rows.extend((SFS, name, t, f, a) for f, a in s.candidates)
        rank_rows.extend((name, f, r) for f, r in rank_features(tr))
    if sbe_trace is not None:
        for t, s in enumerate(sbe_trace.steps, 1):
            trace_rows.append((SBE, sel.wrapper, t, s.feature_id, s.subset_size, s.cv_accuracy))
            cand_rows.extend((SBE, sel.wrapper, t, f, a) for f, a in s.candidates)
    W.csv("selection_trace.csv", ["method", "wrapper", "step", "feature_id", "subset_size", "cv_accuracy"], trace_rows)
    W.csv("selection_candidates.csv", ["method", "wrapper", "step", "candidate", "cv_accuracy"], cand_rows)
    if rank_rows:
        W.csv("rankings.csv", ["wrapper", "feature_id", "rank"], rank_rows)
    return sfs_traces, sbe_trace


def writer_for(cfg: PipelineConfig, out_dir=None) -> _Writer:
    out = Path(out_dir) if out_dir is not None else cfg.resolve(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _Writer(out, cfg.config_hash(), cfg.seed)


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> RunResult:
    cfg.validate()
    W = writer_for(cfg, out_dir)
    out, seed, cfg_hash = W.out, cfg.seed, W.tag["config_hash"]
    sel, specs = cfg.selection, cfg.classifiers
    errors = []

    with stage("features"):
        M0 = load_features(cfg)
        M0.to_csv(out / "features.csv")

    with stage("smote"):
        parts = prepare_partitions(M0, cfg)
        write_partitions(parts, W)
        res, train, test = parts.resampled, parts.train, parts.test

    with stage("selection"):
        sfs_traces, sbe_trace = run_selection(train, cfg, W)

    def ranking_for(name):
        tr = sfs_traces.get(name) or sfs_traces.get(sel.wrapper)
        return [s.feature_id for s in tr.steps] if tr else []

    def evaluate_subset(name, feats):
        cols = train.column_index(feats)
        model = fit_arrays(specs[name], train.M[:, cols], train.labels, feats)
        return model, evaluate(model, test.M[:, cols], test.labels, "test", seed)

    curves, t3, t4, t6, t7 = [], [], [], [], []
    roc_rows, fixed_features = [], []
    with stage("evaluation"):
        if sfs_traces:
            fixed_features = ranking_for(sel.wrapper)[:sel.fixed_sfs]
        for name, spec in specs.items():
            try:
                if sfs_traces:
                    ranked = ranking_for(name)
                    curve = prefix_curve(train, ranked, spec, cv_folds=sel.cv_folds, seed=seed)
                    curves.extend(("SFS", name, n, a) for n, a in curve)
                    top = max(a for _, a in curve)
                    n_best = min(n for n, a in curve if a == top)
                    _, rep = evaluate_subset(name, ranked[:n_best])
                    t3.append([name, n_best, ";".join(ranked[:n_best])] + _metric_row(rep))

                    feats = fixed_features
                    model, rep = evaluate_subset(name, feats)
                    t4.append([name, "SFS", len(feats)] + _metric_row(rep))
                    cols = train.column_index(feats)
                    if cfg.train_metrics == "resubstitution":
                        tr_rep = evaluate(model, train.M[:, cols], train.labels, "train", seed)
                    else:
                        tr_rep = _oof_report(train.M[:, cols], train.labels, spec, sel.cv_folds, seed, "train-cv")
                    t7.append([name, "train"] + _metric_row(tr_rep) + [tr_rep.counts.tp, tr_rep.counts.tn, tr_rep.counts.fp, tr_rep.counts.fn])
                    t7.append([name, "test"] + _metric_row(rep) + [rep.counts.tp, rep.counts.tn, rep.counts.fp, rep.counts.fn])
                    roc_rows.extend((name, fpr, tpr, thr) for fpr, tpr, thr in roc_curve(rep.scores, rep.labels))
                    (out / "models").mkdir(exist_ok=True)
                    save_model(model, out / "models" / f"{name}.json")

                    for n in sel.cv_sizes:
                        if n > len(train.feature_ids):
                            continue
                        subset = pad_subset(ranking_for(sel.wrapper)[:min(n, sel.fixed_sfs)],
                                            train.feature_ids, n, seed)
                        cv = cross_validate_arrays(train.M[:, train.column_index(subset)], train.labels,
                                                   spec, sel.cv_folds, seed)
                        t6.append([n, name, cv.mean_accuracy, cv.std_accuracy])
                if sbe_trace is not None:
                    if name == sel.wrapper:
                        curves.extend(("SBE", name, n, a) for n, a in sbe_trace.curve())
                    size = max(sel.fixed_sbe, len(sbe_trace.final_subset))
                    if size <= len(train.feature_ids):
                        feats = sbe_trace.subset_after(len(train.feature_ids) - size)
                        _, rep = evaluate_subset(name, feats)
                        t4.append([name, "SBE", len(feats)] + _metric_row(rep))
            except NeuroMorphixError as exc:
                log.error("classifier %s failed: %s", name, exc)
                errors.append({"stage": "evaluation", "classifier": name,
                               "error": type(exc).__name__, "message": str(exc)})

    with stage("reports"):
        W.csv("selection_curves.csv", ["method", "classifier", "n_features", "cv_accuracy"], curves)
        W.csv("optimal_subsets.csv", ["classifier", "n_features", "features", *METRIC_COLUMNS], t3)
        W.csv("fixed_subsets.csv", ["classifier", "method", "n_features", *METRIC_COLUMNS], t4)
        W.csv("cv_summary.csv", ["n_features", "classifier", "cv_mean_accuracy", "cv_std_accuracy"], t6)
        W.csv("train_test_metrics.csv", ["classifier", "partition", *METRIC_COLUMNS, "tp", "tn", "fp", "fn"], t7)
        W.csv("roc_points.csv", ["classifier", "fpr", "tpr", "threshold"], roc_rows)
        summary = {
            "config": cfg.to_dict(),
            "config_hash": cfg_hash,
            "seed": seed,
            "smote_stage": cfg.smote_stage,
            "n_subjects": len(M0),
            "n_features": len(M0.feature_ids),
            "class_counts": {Label(k).token: v for k, v in sorted(M0.class_counts().items())},
            "n_after_smote": len(res.matrix) if cfg.smote_stage == "pre-split" else None,
            "n_synthetic": len(res.provenance),
            "n_train": len(train),
            "n_test": len(test),
            "train_class_counts": {Label(k).token: v for k, v in sorted(train.class_counts().items())},
            "test_class_counts": {Label(k).token: v for k, v in sorted(test.class_counts().items())},
            "feature_warnings": len(M0.warnings),
            "selected_features": fixed_features,
            "sfs": {n: [s.feature_id for s in tr.steps] for n, tr in sfs_traces.items()},
            "sbe_final_subset": sbe_trace.final_subset if sbe_trace is not None else None,
            "classifiers": {k: spec_to_dict(v) for k, v in specs.items()},
            "errors": errors,
        }
        W.json("summary.json", summary)
    return RunResult(out, summary, sfs_traces.get(sel.wrapper), sbe_trace, errors)
