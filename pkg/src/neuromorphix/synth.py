"""Synthetic cohorts with planted hemispheric asymmetries.

Each subject's region value is ``base * (1 + b * z_subject)`` shared by both
hemispheres, then perturbed independently per hemisphere by
``(1 + noise_scale * z_hemi)``. Planted effects multiply selected regions of
one hemisphere for subjects of one class. Values are rounded to the
precision the FreeSurfer writers print, so a written and re-parsed cohort
is cell-for-cell identical to the in-memory one.

Config file (INI)::

    [cohort]
    n_positive = 145
    n_negative = 24
    noise_scale = 0.05
    between_subject_scale = 0.10
    seed = 1

    [effect.foldind]
    parameter = FoldInd
    regions = superiorfrontal, precentral
    hemisphere = left
    shift = 0.6
    class = recurrence
    prevalence = 1.0

    [base]
    FoldInd.superiorfrontal = 45
"""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidSpec
from .ingest import (
    APARC_COLUMNS,
    ASEG_COLUMNS,
    CORTICAL_PARAMS,
    DK_REGIONS,
    SUBCORTICAL_PARAMS,
    SUBCORTICAL_STRUCTURES,
    Hemisphere,
    HemisphereTable,
    Kind,
    Label,
    SubjectScan,
)

# decimals printed per column; 0 means an integer field
APARC_DECIMALS = {"NumVert": 0, "SurfArea": 0, "GrayVol": 0, "ThickAvg": 3, "ThickStd": 3,
                  "MeanCurv": 3, "GausCurv": 3, "FoldInd": 0, "CurvInd": 1}
ASEG_DECIMALS = {"NVoxels": 0, "Volume": 1, "normMean": 4, "normStdDev": 4, "normMax": 4}

# typical magnitude ranges per parameter (low, high) used to draw base profiles
CORTICAL_RANGES = {
    "SurfArea": (300.0, 6000.0), "GrayVol": (1000.0, 20000.0), "ThickAvg": (2.0, 3.5),
    "ThickStd": (0.4, 0.9), "MeanCurv": (0.09, 0.18), "GausCurv": (0.01, 0.06),
    "FoldInd": (4.0, 60.0), "CurvInd": (0.5, 8.0),
}
SUBCORTICAL_RANGES = {
    "NVoxels": (200.0, 15000.0), "Volume": (200.0, 15000.0), "normMean": (30.0, 110.0),
    "normStdDev": (5.0, 25.0), "normMax": (120.0, 160.0),
}

# typical adult volumes (mm^3) for the default lateralised structures
TYPICAL_VOLUMES = {
    "Lateral-Ventricle": 7500.0, "Inf-Lat-Vent": 350.0, "Cerebellum-White-Matter": 14000.0,
    "Cerebellum-Cortex": 52000.0, "Thalamus-Proper": 7600.0, "Caudate": 3600.0, "Putamen": 4900.0,
    "Pallidum": 2000.0, "Hippocampus": 4100.0, "Amygdala": 1650.0, "Accumbens-area": 550.0,
    "VentralDC": 4000.0, "vessel": 60.0, "choroid-plexus": 800.0,
}

SEG_IDS = {
    "Lateral-Ventricle": (4, 43), "Inf-Lat-Vent": (5, 44), "Cerebellum-White-Matter": (7, 46),
    "Cerebellum-Cortex": (8, 47), "Thalamus-Proper": (10, 49), "Thalamus": (10, 49),
    "Caudate": (11, 50), "Putamen": (12, 51), "Pallidum": (13, 52), "Hippocampus": (17, 53),
    "Amygdala": (18, 54), "Accumbens-area": (26, 58), "VentralDC": (28, 60),
    "vessel": (30, 62), "choroid-plexus": (31, 63),
}
# unlateralised rows written for realism; the parser must skip them
MIDLINE_ROWS = (("3rd-Ventricle", 14), ("4th-Ventricle", 15), ("Brain-Stem", 16), ("CSF", 24))


def _quantize(x, decimals):
    if decimals == 0:
        return np.round(x)
    return np.array([float(f"{v:.{decimals}f}") for v in np.ravel(x)]).reshape(np.shape(x))


def default_base(kind: Kind, regions: Sequence[str]) -> np.ndarray:
    """Fixed, seed-independent base profile (regions x params) of plausible magnitudes."""
    ranges = CORTICAL_RANGES if kind is Kind.CORTICAL else SUBCORTICAL_RANGES
    rng = np.random.default_rng(np.random.SeedSequence([0xB4A5E, 0 if kind is Kind.CORTICAL else 1]))
    base = np.column_stack([rng.uniform(lo, hi, len(regions)) for lo, hi in ranges.values()])
    if kind is Kind.SUBCORTICAL:
        for i, r in enumerate(regions):
            if r in TYPICAL_VOLUMES:
                base[i, 0] = TYPICAL_VOLUMES[r]
        base[:, 1] = base[:, 0]  # Volume tracks NVoxels at 1 mm^3 voxels
    return base


@dataclass(frozen=True)
class PlantedEffect:
    parameter: str
    regions: tuple
    hemisphere: Hemisphere = Hemisphere.LEFT
    shift: float = 0.6
    label: Label = Label.RECURRENCE
    prevalence: float = 1.0


@dataclass
class SynthSpec:
    n_positive: int = 145
    n_negative: int = 24
    noise_scale: float = 0.05
    between_subject_scale: float = 0.10
    planted_effects: list = field(default_factory=list)
    seed: int = 0
    cortical_regions: tuple = DK_REGIONS
    subcortical_structures: tuple = SUBCORTICAL_STRUCTURES
    cortical_base: np.ndarray | None = None
    subcortical_base: np.ndarray | None = None

    def __post_init__(self):
        if self.cortical_base is None:
            self.cortical_base = default_base(Kind.CORTICAL, self.cortical_regions)
        if self.subcortical_base is None:
            self.subcortical_base = default_base(Kind.SUBCORTICAL, self.subcortical_structures)
        self.validate()

    def validate(self):
        if self.n_positive < 0 or self.n_negative < 0 or self.n_positive + self.n_negative == 0:
            raise InvalidSpec("class sizes must be non-negative and not both zero")
        if self.noise_scale < 0 or self.between_subject_scale < 0:
            raise InvalidSpec("noise scales must be non-negative")
        if self.seed < 0:
            raise InvalidSpec("seed must be non-negative")
        for base, n, p in ((self.cortical_base, len(self.cortical_regions), len(CORTICAL_PARAMS)),
                           (self.subcortical_base, len(self.subcortical_structures), len(SUBCORTICAL_PARAMS))):
            if np.shape(base) != (n, p) or np.any(np.asarray(base) < 0):
                raise InvalidSpec(f"base profile must be a non-negative {n}x{p} array")
        for e in self.planted_effects:
            if e.parameter in CORTICAL_PARAMS:
                pool = self.cortical_regions
            elif e.parameter in SUBCORTICAL_PARAMS:
                pool = self.subcortical_structures
            else:
                raise InvalidSpec(f"planted effect on unknown parameter {e.parameter!r}")
            bad = [r for r in e.regions if r not in pool]
            if bad or not e.regions:
                raise InvalidSpec(f"planted effect on {e.parameter}: bad regions {bad or '[]'}")
            if not e.shift > 0:
                raise InvalidSpec("planted shifts are multiplicative and must be > 0")
            if not 0 <= e.prevalence <= 1:
                raise InvalidSpec("prevalence must lie in [0, 1]")
            if e.label is Label.UNLABELED:
                raise InvalidSpec("planted effects must target a labelled class")


def _hemisphere_pair(rng, base, between, noise):
    n, p = base.shape
    shared = base * np.maximum(1.0 + between * rng.standard_normal((n, p)), 0.05)
    left = shared * np.maximum(1.0 + noise * rng.standard_normal((n, p)), 0.05)
    right = shared * np.maximum(1.0 + noise * rng.standard_normal((n, p)), 0.05)
    return left, right


def _apply_effects(spec, rng, label, kind, regions, params, left, right):
    for e in spec.planted_effects:
        if e.parameter not in params:
            continue
        carries = rng.random() < e.prevalence  # drawn for every subject to keep streams aligned
        if e.label is not label or not carries:
            continue
        j = params.index(e.parameter)
        rows = [regions.index(r) for r in e.regions]
        target = left if e.hemisphere is Hemisphere.LEFT else right
        target[rows, j] *= e.shift


def _finish_subcortical(X):
    X[:, 0] = np.round(X[:, 0])
    X[:, 4] = np.maximum(X[:, 4], X[:, 2] + 1.0)  # normMax above normMean
    for j, p in enumerate(SUBCORTICAL_PARAMS):
        X[:, j] = _quantize(X[:, j], ASEG_DECIMALS[p])
    return X


def _finish_cortical(X):
    for j, p in enumerate(CORTICAL_PARAMS):
        X[:, j] = _quantize(X[:, j], APARC_DECIMALS[p])
    return X


def generate_cohort(spec: SynthSpec) -> list[SubjectScan]:
    """Positive (recurrence) subjects first, then controls; ids ``sub-0001``...

    Each subject draws from its own stream keyed by ``(seed, index)``.
    """
    spec.validate()
    labels = [Label.RECURRENCE] * spec.n_positive + [Label.NO_RECURRENCE] * spec.n_negative
    width = max(4, len(str(len(labels))))
    cohort = []
    for i, label in enumerate(labels):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, i]))
        tables = {}
        for kind, regions, params, base in (
            (Kind.CORTICAL, spec.cortical_regions, CORTICAL_PARAMS, spec.cortical_base),
            (Kind.SUBCORTICAL, spec.subcortical_structures, SUBCORTICAL_PARAMS, spec.subcortical_base),
        ):
            left, right = _hemisphere_pair(rng, np.asarray(base, dtype=np.float64),
                                           spec.between_subject_scale, spec.noise_scale)
            _apply_effects(spec, rng, label, kind, list(regions), params, left, right)
            finish = _finish_cortical if kind is Kind.CORTICAL else _finish_subcortical
            for hemi, X in ((Hemisphere.LEFT, finish(left)), (Hemisphere.RIGHT, finish(right))):
                tables[kind, hemi] = HemisphereTable(hemi, kind, regions, params, X)
        cohort.append(SubjectScan(
            f"sub-{i + 1:0{width}d}",
            tables[Kind.CORTICAL, Hemisphere.LEFT], tables[Kind.CORTICAL, Hemisphere.RIGHT],
            tables[Kind.SUBCORTICAL, Hemisphere.LEFT], tables[Kind.SUBCORTICAL, Hemisphere.RIGHT],
            label,
        ))
    return cohort


# -- stats-file writers --------------------------------------------------------

def _cell(value, decimals):
    return f"{int(round(value))}" if decimals == 0 else f"{value:.{decimals}f}"


def format_aparc_stats(table: HemisphereTable, subject_id: str = "synthetic") -> str:
    hemi = "lh" if table.hemisphere is Hemisphere.LEFT else "rh"
    lines = [
        "# Table of FreeSurfer cortical parcellation anatomical statistics",
        "#",
        f"# subjectname {subject_id}",
        f"# hemi {hemi}",
        "# AnnotationFile ../label/" + hemi + ".aparc.annot",
        f"# NTableCols {len(APARC_COLUMNS)}",
        "# ColHeaders " + " ".join(APARC_COLUMNS),
    ]
    area = table.column("SurfArea")
    for name, row, a in zip(table.region_labels, table.X, area):
        cells = [name, str(int(round(a * 1.45)))]
        cells += [_cell(v, APARC_DECIMALS[p]) for p, v in zip(table.param_labels, row)]
        lines.append(f"{cells[0]:<40s} " + " ".join(f"{c:>9s}" for c in cells[1:]))
    return "\n".join(lines) + "\n"


def format_aseg_stats(left: HemisphereTable, right: HemisphereTable, subject_id: str = "synthetic") -> str:
    lines = [
        "# Title Segmentation Statistics",
        "#",
        f"# subjectname {subject_id}",
        "# Measure BrainSeg, BrainSegVol, Brain Segmentation Volume, 1000000.0, mm^3",
        f"# NTableCols {len(ASEG_COLUMNS)}",
        "# ColHeaders  " + " ".join(ASEG_COLUMNS),
    ]
    rows = []
    for side, table in (("Left", left), ("Right", right)):
        for name, vals in zip(table.region_labels, table.X):
            seg = SEG_IDS.get(name, (900, 901))[0 if side == "Left" else 1]
            rows.append((seg, f"{side}-{name}", vals))
    for name, seg in MIDLINE_ROWS:
        rows.append((seg, name, np.array([1000.0, 1000.0, 60.0, 10.0, 120.0])))
    rows.sort(key=lambda r: r[0])
    for idx, (seg, name, v) in enumerate(rows, start=1):
        n_vox, vol, mean, std, vmax = v
        vmin = max(0.0, mean - 3 * std)
        cells = [str(idx), str(seg), _cell(n_vox, 0), _cell(vol, 1), name,
                 _cell(mean, 4), _cell(std, 4), _cell(vmin, 4), _cell(vmax, 4), _cell(vmax - vmin, 4)]
        lines.append(f"{cells[0]:>3s} {cells[1]:>4s} {cells[2]:>8s} {cells[3]:>10s}  {cells[4]:<32s} "
                     + " ".join(f"{c:>9s}" for c in cells[5:]))
    return "\n".join(lines) + "\n"


def write_stats_tree(cohort: Sequence[SubjectScan], out_dir) -> Path:
    """Write ``<subject>/{lh,rh}.aparc.stats`` and ``aseg.stats`` plus ``manifest.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "label", "lh_aparc", "rh_aparc", "aseg"])
        for scan in cohort:
            sdir = out_dir / scan.subject_id
            sdir.mkdir(exist_ok=True)
            (sdir / "lh.aparc.stats").write_text(format_aparc_stats(scan.cortical_left, scan.subject_id))
            (sdir / "rh.aparc.stats").write_text(format_aparc_stats(scan.cortical_right, scan.subject_id))
            (sdir / "aseg.stats").write_text(
                format_aseg_stats(scan.subcortical_left, scan.subcortical_right, scan.subject_id))
            w.writerow([scan.subject_id, scan.label.token,
                        f"{scan.subject_id}/lh.aparc.stats", f"{scan.subject_id}/rh.aparc.stats",
                        f"{scan.subject_id}/aseg.stats"])
    return manifest


# -- config file ---------------------------------------------------------------

def _regions(text):
    return tuple(r.strip() for r in text.replace("\n", ",").split(",") if r.strip())


def synth_spec_from_config(path) -> SynthSpec:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep parameter-name case
    if not cp.read(path):
        raise InvalidSpec(f"cannot read synth config {path}")
    try:
        c = cp["cohort"] if cp.has_section("cohort") else {}
        effects = []
        for sec in cp.sections():
            if not sec.startswith("effect"):
                continue
            e = cp[sec]
            effects.append(PlantedEffect(
                e["parameter"].strip(), _regions(e["regions"]),
                Hemisphere(e.get("hemisphere", "left").strip().capitalize()),
                float(e.get("shift", "0.6")), Label.parse(e.get("class", "recurrence")),
                float(e.get("prevalence", "1.0")),
            ))
        spec = SynthSpec(
            n_positive=int(c.get("n_positive", 145)), n_negative=int(c.get("n_negative", 24)),
            noise_scale=float(c.get("noise_scale", 0.05)),
            between_subject_scale=float(c.get("between_subject_scale", 0.10)),
            planted_effects=effects, seed=int(c.get("seed", 0)),
        )
        if cp.has_section("base"):
            for key, value in cp["base"].items():
                param, region = key.split(".", 1)
                if param in CORTICAL_PARAMS:
                    spec.cortical_base[spec.cortical_regions.index(region), CORTICAL_PARAMS.index(param)] = float(value)
                else:
                    spec.subcortical_base[spec.subcortical_structures.index(region),
                                          SUBCORTICAL_PARAMS.index(param)] = float(value)
            spec.validate()
    except (KeyError, ValueError) as exc:
        raise InvalidSpec(f"{path}: {exc}") from exc
    return spec
