"""Pipeline configuration (INI file).

Example::

    [run]
    manifest = cohort/manifest.csv     ; or: features = features.csv
    output_dir = results
    seed = 0
    smote_stage = pre-split            ; or train-only
    lenient = false
    train_metrics = resubstitution     ; or cv
    classifiers = knn, dt, rf, gb      ; optional subset of the sections below

    [asymmetry]
    epsilon_multiplier = 1.0

    [smote]
    k_neighbors = 5

    [selection]
    method = sfs                       ; sfs, sbe or both
    wrapper = knn                      ; name of a [classifier.*] section
    k_max = 10
    k_min = 25
    cv_folds = 5
    fixed_sfs = 5
    fixed_sbe = 25
    cv_sizes = 5, 7, 15, 30
    per_classifier = false

    [classifier.knn]
    kind = knn
    k = 3

Relative paths resolve against the config file's directory. Any
``[classifier.*]`` section may set ``seed``; otherwise the run seed is used.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .features import AsymmetryConfig
from .learners import SPEC_TYPES, spec_from_dict, spec_to_dict, validate_spec
from .smote import ResampleConfig

SMOTE_STAGES = ("pre-split", "train-only")


def default_classifiers(seed: int = 0) -> dict:
    """KNN, decision tree, random forest and gradient boosting with their default settings."""
    from .learners import DecisionTreeSpec, GradientBoostingSpec, KNNSpec, RandomForestSpec
    return {
        "knn": KNNSpec(k=3, seed=seed),
        "dt": DecisionTreeSpec(seed=seed),
        "rf": RandomForestSpec(max_depth=4, seed=seed),
        "gb": GradientBoostingSpec(learning_rate=1.0, seed=seed),
    }


@dataclass
class SelectionConfig:
    method: str = "sfs"
    wrapper: str = "knn"
    k_max: int = 10
    k_min: int = 25
    cv_folds: int = 5
    fixed_sfs: int = 5
    fixed_sbe: int = 25
    cv_sizes: tuple = (5, 7, 15, 30)
    per_classifier: bool = False


@dataclass
class PipelineConfig:
    manifest: str | None = None
    features: str | None = None
    output_dir: str = "results"
    seed: int = 0
    smote_stage: str = "pre-split"
    lenient: bool = False
    train_metrics: str = "resubstitution"
    asymmetry: AsymmetryConfig = field(default_factory=AsymmetryConfig)
    smote: ResampleConfig = field(default_factory=ResampleConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    classifiers: dict = field(default_factory=default_classifiers)
    base_dir: str = "."

    def validate(self):
        if not self.manifest and not self.features:
            raise ConfigError("config needs either run.manifest or run.features")
        if self.smote_stage not in SMOTE_STAGES:
            raise ConfigError(f"smote_stage must be one of {SMOTE_STAGES}")
        if self.train_metrics not in ("resubstitution", "cv"):
            raise ConfigError("train_metrics must be 'resubstitution' or 'cv'")
        if not self.classifiers:
            raise ConfigError("no classifiers configured")
        for spec in self.classifiers.values():
            validate_spec(spec)
        sel = self.selection
        if sel.method not in ("sfs", "sbe", "both"):
            raise ConfigError("selection.method must be sfs, sbe or both")
        if sel.wrapper not in self.classifiers:
            raise ConfigError(f"selection.wrapper {sel.wrapper!r} is not a configured classifier")
        if sel.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        if min(sel.k_max, sel.k_min, sel.fixed_sfs, sel.fixed_sbe) < 1:
            raise ConfigError("selection sizes must be >= 1")
        if sel.fixed_sfs > sel.k_max:
            raise ConfigError("fixed_sfs cannot exceed k_max")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return self

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        """Everything that influences results; ``output_dir`` and ``base_dir`` are excluded."""
        return {
            "manifest": self.manifest,
            "features": self.features,
            "seed": self.seed,
            "smote_stage": self.smote_stage,
            "lenient": self.lenient,
            "train_metrics": self.train_metrics,
            "asymmetry": asdict(self.asymmetry),
            "smote": asdict(self.smote),
            "selection": {**asdict(self.selection), "cv_sizes": list(self.selection.cv_sizes)},
            "classifiers": {k: spec_to_dict(v) for k, v in self.classifiers.items()},
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Reseed the run and every component that inherited the old run seed."""
        old = self.seed
        smote = replace(self.smote, seed=seed) if self.smote.seed == old else self.smote
        clfs = {k: (replace(v, seed=seed) if v.seed == old else v) for k, v in self.classifiers.items()}
        return replace(self, seed=seed, smote=smote, classifiers=clfs)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(value: str, default):
    if isinstance(default, bool):
        return _bool(value)
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(int(v) for v in value.replace(",", " ").split())
    return value.strip()


def _section(cp, name, cls, overrides=None):
    values = asdict(cls())
    if cp.has_section(name):
        for key, value in cp[name].items():
            if key not in values:
                raise ConfigError(f"[{name}] unknown key {key!r}")
            values[key] = _coerce(value, values[key])
    values.update(overrides or {})
    return cls(**values)


def _classifier(section, seed):
    d = dict(section)
    kind = d.pop("kind", None)
    if kind not in SPEC_TYPES:
        raise ConfigError(f"classifier kind must be one of {sorted(SPEC_TYPES)}, got {kind!r}")
    proto = SPEC_TYPES[kind]()
    kw = {"kind": kind, "seed": seed}
    for key, value in d.items():
        if not hasattr(proto, key):
            raise ConfigError(f"classifier {kind}: unknown key {key!r}")
        default = getattr(proto, key)
        if value.strip().lower() in ("none", ""):
            kw[key] = None
        elif default is None:
            kw[key] = int(value)
        else:
            kw[key] = _coerce(value, default)
    return spec_from_dict(kw)


def load_config(path, **overrides) -> PipelineConfig:
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not cp.read(path):
        raise ConfigError(f"cannot read config {path}")
    try:
        run = cp["run"] if cp.has_section("run") else {}
        seed = int(run.get("seed", 0))
        cfg = PipelineConfig(
            manifest=run.get("manifest") or None,
            features=run.get("features") or None,
            output_dir=run.get("output_dir", "results"),
            seed=seed,
            smote_stage=run.get("smote_stage", "pre-split").strip(),
            lenient=_bool(run.get("lenient", "false")),
            train_metrics=run.get("train_metrics", "resubstitution").strip(),
            asymmetry=_section(cp, "asymmetry", AsymmetryConfig),
            smote=_section(cp, "smote", ResampleConfig, None if cp.has_option("smote", "seed") else {"seed": seed}),
            selection=_section(cp, "selection", SelectionConfig),
            base_dir=str(path.parent),
        )
        clf_sections = [s for s in cp.sections() if s.startswith("classifier.")]
        if clf_sections:
            pool = {s.split(".", 1)[1]: _classifier(cp[s], seed) for s in clf_sections}
        else:
            pool = default_classifiers(seed)
        if "classifiers" in run:
            names = [n.strip() for n in run["classifiers"].split(",") if n.strip()]
            unknown = [n for n in names if n not in pool]
            if unknown:
                raise ConfigError(f"run.classifiers names unknown classifiers {unknown}")
            pool = {n: pool[n] for n in names}
        cfg.classifiers = pool
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "seed":
            cfg = cfg.with_seed(int(value))
        else:
            setattr(cfg, key, value)
    return cfg.validate()
