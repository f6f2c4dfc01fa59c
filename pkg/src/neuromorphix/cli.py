"""Command-line entry point.

Subcommands::

    neuromorphix ingest MANIFEST -o TABLE_DIR
    neuromorphix features (--manifest MANIFEST | --tables TABLE_DIR) -o features.csv
    neuromorphix synth [--spec SYNTH.ini] -o OUT_DIR
    neuromorphix select --config RUN.ini [-o OUT_DIR]
    neuromorphix run --config RUN.ini [-o OUT_DIR]
    neuromorphix report RUN_DIR [-o report.json]

Exit status is 0 on success, 2 for input or validation errors and 3 for
runtime or numeric failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import SMOTE_STAGES, PipelineConfig, load_config
from .errors import ConfigError, InputError, NeuroMorphixError
from .features import AsymmetryConfig, build_matrix
from .ingest import export_parameter_tables, load_cohort, load_parameter_tables
from .pipeline import (
    load_features,
    prepare_partitions,
    run_pipeline,
    run_selection,
    stage,
    write_partitions,
    writer_for,
)
from .synth import SynthSpec, generate_cohort, synth_spec_from_config, write_stats_tree

log = logging.getLogger("neuromorphix")

REPORT_TABLES = ("optimal_subsets", "fixed_subsets", "cv_summary", "train_test_metrics", "selection_curves")


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _common(p, *, config=False, seed=False, smote=False, lenient=False):
    if config:
        p.add_argument("--config", required=True, help="run configuration (INI)")
    if seed:
        p.add_argument("--seed", type=_u64, help="override the configured seed")
    if smote:
        p.add_argument("--smote-stage", choices=SMOTE_STAGES, help="oversample before the split or on the training set only")
    if lenient:
        p.add_argument("--lenient", action="store_true", default=None,
                       help="accept cortical tables with a nonstandard region count")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neuromorphix", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse stats files into per-parameter CSV tables")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _common(p, lenient=True)

    p = sub.add_parser("features", help="compute the 91 asymmetry features per subject")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--tables", help="directory written by 'ingest'")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--allow-unlabeled", action="store_true")
    p.add_argument("--config", help="take [asymmetry] settings from this run config")
    _common(p, lenient=True)

    p = sub.add_parser("synth", help="write a synthetic stats tree and manifest")
    p.add_argument("--spec", help="synthetic cohort config (INI); defaults to a 145/24 cohort")
    p.add_argument("-o", "--out", required=True)
    _common(p, seed=True)

    p = sub.add_parser("select", help="oversample, split and run feature selection")
    p.add_argument("-o", "--out")
    _common(p, config=True, seed=True, smote=True, lenient=True)

    p = sub.add_parser("run", help="run the full pipeline and write the report bundle")
    p.add_argument("-o", "--out")
    _common(p, config=True, seed=True, smote=True, lenient=True)

    p = sub.add_parser("report", help="collect a run's report tables into one JSON document")
    p.add_argument("run_dir")
    p.add_argument("-o", "--out", help="output JSON (default: RUN_DIR/report.json)")
    return ap


def _config(args) -> PipelineConfig:
    return load_config(args.config, seed=args.seed, smote_stage=args.smote_stage, lenient=args.lenient)


def cmd_ingest(args):
    cohort = load_cohort(args.manifest, lenient=bool(args.lenient), jobs=args.jobs)
    paths = export_parameter_tables(cohort, args.out)
    print(f"wrote {len(paths)} tables for {len(cohort)} subjects to {args.out}")
    return 0


def cmd_features(args):
    asym = load_config(args.config).asymmetry if args.config else AsymmetryConfig()
    if args.manifest:
        cohort = load_cohort(args.manifest, lenient=bool(args.lenient))
    else:
        cohort = load_parameter_tables(args.tables)
    M = build_matrix(cohort, asym, require_labels=not args.allow_unlabeled)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    M.to_csv(args.out)
    print(f"wrote {M.shape[0]}x{M.shape[1]} feature matrix to {args.out}")
    return 0


def cmd_synth(args):
    spec = synth_spec_from_config(args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    cohort = generate_cohort(spec)
    manifest = write_stats_tree(cohort, args.out)
    print(f"wrote {len(cohort)} subjects; manifest {manifest}")
    return 0


def cmd_select(args):
    cfg = _config(args)
    W = writer_for(cfg, args.out)
    with stage("features"):
        M0 = load_features(cfg)
        M0.to_csv(W.out / "features.csv")
    with stage("smote"):
        parts = prepare_partitions(M0, cfg)
        write_partitions(parts, W)
    with stage("selection"):
        sfs_traces, sbe_trace = run_selection(parts.train, cfg, W)
    for name, tr in sfs_traces.items():
        print(f"SFS[{name}]: " + ", ".join(s.feature_id for s in tr.steps))
    if sbe_trace is not None:
        print(f"SBE[{cfg.selection.wrapper}]: {len(sbe_trace.final_subset)} features kept")
    return 0


def cmd_run(args):
    cfg = _config(args)
    res = run_pipeline(cfg, args.out)
    s = res.summary
    print(f"run {s['config_hash']} seed {s['seed']}: {s['n_train']} train / {s['n_test']} test rows -> {res.out_dir}")
    for e in res.errors:
        print(f"error: [{e['stage']}:{e['classifier']}] {e['error']}: {e['message']}", file=sys.stderr)
    return 3 if res.errors else 0


def _read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(args):
    run_dir = Path(args.run_dir)
    summary_path = run_dir / "summary.json"
    if not summary_path.is_file():
        raise InputError(f"{run_dir} is not a run directory (no summary.json)")
    summary = json.loads(summary_path.read_text())
    doc = {"summary": summary}
    for name in REPORT_TABLES:
        path = run_dir / f"{name}.csv"
        if path.is_file():
            doc[name] = _read_table(path)
    out = Path(args.out) if args.out else run_dir / "report.json"
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    print(f"config {summary['config_hash']}  seed {summary['seed']}  smote {summary['smote_stage']}")
    print(f"subjects {summary['n_subjects']}  features {summary['n_features']}  "
          f"train {summary['n_train']}  test {summary['n_test']}")
    for row in doc.get("fixed_subsets", []):
        print(f"  {row['classifier']:<20} {row['method']} n={row['n_features']:<3} "
              f"AUROC={_short(row['auroc'])} acc={_short(row['accuracy'])} F1={_short(row['f1'])}")
    print(f"wrote {out}")
    return 0


def _short(text):
    try:
        return f"{float(text):.3f}"
    except ValueError:
        return "n/a"


COMMANDS = {
    "ingest": cmd_ingest,
    "features": cmd_features,
    "synth": cmd_synth,
    "select": cmd_select,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NeuroMorphixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
