"""FreeSurfer stats-file ingestion.

Parses ``?h.aparc.stats`` (cortical parcellation) and ``aseg.stats``
(subcortical segmentation) into per-hemisphere region x parameter matrices,
loads cohorts from a CSV manifest and exports the per-parameter tables.

Columns are located by name through the ``# ColHeaders`` line, never by
position.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DuplicateSubjectId,
    InvalidCellValue,
    MalformedHeader,
    ManifestError,
    MissingStructure,
    NonNumericCell,
    ParseError,
    RegionCountMismatch,
    RegionMismatch,
    RowArityMismatch,
    UnknownColumn,
    UnknownRegion,
)


class Hemisphere(str, enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


class Kind(str, enum.Enum):
    CORTICAL = "Cortical"
    SUBCORTICAL = "Subcortical"


class Label(enum.IntEnum):
    """Outcome label. ``RECURRENCE`` is the positive class."""

    NO_RECURRENCE = 0
    RECURRENCE = 1
    UNLABELED = -1

    @property
    def token(self) -> str:
        return _LABEL_TOKENS[self]

    @classmethod
    def parse(cls, text: str) -> "Label":
        key = text.strip().lower().replace("-", "_").replace(" ", "_")
        try:
            return _LABEL_ALIASES[key]
        except KeyError:
            raise ManifestError(f"unrecognised label {text!r}") from None


_LABEL_TOKENS = {
    Label.RECURRENCE: "recurrence",
    Label.NO_RECURRENCE: "no_recurrence",
    Label.UNLABELED: "unlabeled",
}
_LABEL_ALIASES = {
    "recurrence": Label.RECURRENCE,
    "1": Label.RECURRENCE,
    "positive": Label.RECURRENCE,
    "no_recurrence": Label.NO_RECURRENCE,
    "norecurrence": Label.NO_RECURRENCE,
    "0": Label.NO_RECURRENCE,
    "negative": Label.NO_RECURRENCE,
    "unlabeled": Label.UNLABELED,
    "unlabelled": Label.UNLABELED,
    "": Label.UNLABELED,
}


# Output parameter labels, in matrix column order.
CORTICAL_PARAMS = (
    "SurfArea", "GrayVol", "ThickAvg", "ThickStd",
    "MeanCurv", "GausCurv", "FoldInd", "CurvInd",
)
SUBCORTICAL_PARAMS = ("NVoxels", "Volume", "normMean", "normStdDev", "normMax")

# aseg.stats column name for each subcortical parameter
_ASEG_COLUMNS = {
    "NVoxels": "NVoxels",
    "Volume": "Volume_mm3",
    "normMean": "normMean",
    "normStdDev": "normStdDev",
    "normMax": "normMax",
}

APARC_COLUMNS = ("StructName", "NumVert") + CORTICAL_PARAMS
ASEG_COLUMNS = (
    "Index", "SegId", "NVoxels", "Volume_mm3", "StructName",
    "normMean", "normStdDev", "normMin", "normMax", "normRange",
)

DK_REGIONS = (
    "bankssts", "caudalanteriorcingulate", "caudalmiddlefrontal", "cuneus",
    "entorhinal", "fusiform", "inferiorparietal", "inferiortemporal",
    "isthmuscingulate", "lateraloccipital", "lateralorbitofrontal", "lingual",
    "medialorbitofrontal", "middletemporal", "parahippocampal", "paracentral",
    "parsopercularis", "parsorbitalis", "parstriangularis", "pericalcarine",
    "postcentral", "posteriorcingulate", "precentral", "precuneus",
    "rostralanteriorcingulate", "rostralmiddlefrontal", "superiorfrontal",
    "superiorparietal", "superiortemporal", "supramarginal", "frontalpole",
    "temporalpole", "transversetemporal", "insula",
)

SUBCORTICAL_STRUCTURES = (
    "Lateral-Ventricle", "Inf-Lat-Vent", "Cerebellum-White-Matter",
    "Cerebellum-Cortex", "Thalamus-Proper", "Caudate", "Putamen", "Pallidum",
    "Hippocampus", "Amygdala", "Accumbens-area", "VentralDC", "vessel",
    "choroid-plexus",
)

# FreeSurfer 7 renamed Thalamus-Proper to Thalamus.
STRUCTURE_ALIASES = {"Thalamus-Proper": ("Thalamus",)}

_NON_NEGATIVE_CORTICAL = {"SurfArea", "GrayVol", "ThickAvg", "ThickStd", "FoldInd"}


class CorticalRegionRecord(NamedTuple):
    region_name: str
    surf_area: float
    gray_vol: float
    thick_avg: float
    thick_std: float
    mean_curv: float
    gaus_curv: float
    fold_ind: float
    curv_ind: float


class SubcorticalRegionRecord(NamedTuple):
    region_name: str
    n_voxels: float
    volume: float
    norm_mean: float
    norm_std: float
    norm_max: float


@dataclass(frozen=True)
class HemisphereTable:
    """Region x parameter matrix for one hemisphere."""

    hemisphere: Hemisphere
    kind: Kind
    region_labels: tuple
    param_labels: tuple
    X: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim != 2 or X.shape != (len(self.region_labels), len(self.param_labels)):
            raise ValueError(
                f"matrix shape {X.shape} does not match "
                f"{len(self.region_labels)} regions x {len(self.param_labels)} params"
            )
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "region_labels", tuple(self.region_labels))
        object.__setattr__(self, "param_labels", tuple(self.param_labels))

    @property
    def shape(self):
        return self.X.shape

    def column(self, param: str) -> np.ndarray:
        return self.X[:, self.param_labels.index(param)]

    def records(self):
        rec = CorticalRegionRecord if self.kind is Kind.CORTICAL else SubcorticalRegionRecord
        return [rec(name, *map(float, row)) for name, row in zip(self.region_labels, self.X)]

    def reordered(self, region_labels: Sequence[str]) -> "HemisphereTable":
        if sorted(region_labels) != sorted(self.region_labels):
            raise RegionMismatch(
                f"{self.hemisphere.value} {self.kind.value.lower()} regions differ from the "
                "opposite hemisphere"
            )
        idx = [self.region_labels.index(r) for r in region_labels]
        return HemisphereTable(self.hemisphere, self.kind, region_labels, self.param_labels, self.X[idx])

    def __eq__(self, other):
        if not isinstance(other, HemisphereTable):
            return NotImplemented
        return (
            self.hemisphere == other.hemisphere
            and self.kind == other.kind
            and self.region_labels == other.region_labels
            and self.param_labels == other.param_labels
            and np.array_equal(self.X, other.X)
        )


@dataclass(frozen=True)
class SubjectScan:
    subject_id: str
    cortical_left: HemisphereTable
    cortical_right: HemisphereTable
    subcortical_left: HemisphereTable
    subcortical_right: HemisphereTable
    label: Label = Label.UNLABELED

    def __post_init__(self):
        for left, right in ((self.cortical_left, self.cortical_right),
                            (self.subcortical_left, self.subcortical_right)):
            if left.kind != right.kind:
                raise ValueError("paired tables must share a kind")
            if left.hemisphere is not Hemisphere.LEFT or right.hemisphere is not Hemisphere.RIGHT:
                raise ValueError("tables passed in the wrong hemisphere slots")
            if left.region_labels != right.region_labels:
                raise RegionMismatch(
                    f"{left.kind.value.lower()} region order differs between hemispheres",
                    subject_id=self.subject_id,
                )
            if left.param_labels != right.param_labels:
                raise RegionMismatch(
                    f"{left.kind.value.lower()} parameter labels differ between hemispheres",
                    subject_id=self.subject_id,
                )
        if self.cortical_left.kind is not Kind.CORTICAL or self.subcortical_left.kind is not Kind.SUBCORTICAL:
            raise ValueError("cortical/subcortical tables swapped")

    def pairs(self):
        """Yield ``(kind, left_table, right_table)`` in canonical order."""
        yield Kind.CORTICAL, self.cortical_left, self.cortical_right
        yield Kind.SUBCORTICAL, self.subcortical_left, self.subcortical_right

    def with_label(self, label: Label) -> "SubjectScan":
        return SubjectScan(self.subject_id, self.cortical_left, self.cortical_right,
                           self.subcortical_left, self.subcortical_right, label)


# -- lexical layer -------------------------------------------------------------

@dataclass
class StatsTable:
    """Raw tokenised content of a stats file."""

    columns: tuple
    rows: list = field(default_factory=list)  # (line_no, tokens)
    n_comment_lines: int = 0
    n_blank_lines: int = 0

    def index(self, name):
        try:
            return self.columns.index(name)
        except ValueError:
            raise UnknownColumn(
                f"required column {name!r} not present in ColHeaders {list(self.columns)}"
            ) from None


def read_stats_table(text: str) -> StatsTable:
    """Tokenise a FreeSurfer stats file.

    Comment lines start with ``#``; the one whose second token is
    ``ColHeaders`` names the columns. Every other non-blank line is a data
    row and must have exactly one token per column.
    """
    columns = None
    rows = []
    n_comment = n_blank = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            n_blank += 1
            continue
        if stripped.startswith("#"):
            n_comment += 1
            tokens = stripped[1:].split()
            if tokens and tokens[0] == "ColHeaders":
                if columns is not None:
                    raise MalformedHeader("more than one ColHeaders line", line_no=line_no)
                columns = tuple(tokens[1:])
                if not columns:
                    raise MalformedHeader("empty ColHeaders line", line_no=line_no)
            continue
        if columns is None:
            raise MalformedHeader("data row before any ColHeaders line", line_no=line_no)
        tokens = stripped.split()
        if len(tokens) != len(columns):
            raise RowArityMismatch(
                f"expected {len(columns)} fields, found {len(tokens)}", line_no=line_no
            )
        rows.append((line_no, tokens))
    if columns is None:
        raise MalformedHeader("no '# ColHeaders' line found")
    return StatsTable(columns, rows, n_comment, n_blank)


def _number(token, column, line_no):
    try:
        value = float(token)
    except ValueError:
        raise NonNumericCell(f"column {column}: {token!r} is not numeric", line_no=line_no) from None
    if not math.isfinite(value):
        raise NonNumericCell(f"column {column}: {token!r} is not finite", line_no=line_no)
    return value


def _check_numeric_row(table: StatsTable, line_no, tokens, text_columns):
    for name, tok in zip(table.columns, tokens):
        if name not in text_columns:
            _number(tok, name, line_no)


# -- parsers -------------------------------------------------------------------

def parse_aparc_stats(text: str, hemisphere, *, lenient: bool = False,
                      regions: Sequence[str] = DK_REGIONS) -> HemisphereTable:
    """Parse an ``?h.aparc.stats`` file into an N x 8 table (file row order).

    In strict mode the row count must equal ``len(regions)`` and every row
    must name a configured region. ``lenient=True`` skips both checks.
    """
    hemisphere = Hemisphere(hemisphere)
    table = read_stats_table(text)
    name_col = table.index("StructName")
    param_cols = [table.index(p) for p in CORTICAL_PARAMS]

    names, values = [], []
    for line_no, tokens in table.rows:
        _check_numeric_row(table, line_no, tokens, {"StructName"})
        row = [_number(tokens[c], p, line_no) for c, p in zip(param_cols, CORTICAL_PARAMS)]
        for p, v in zip(CORTICAL_PARAMS, row):
            if p in _NON_NEGATIVE_CORTICAL and v < 0:
                raise InvalidCellValue(f"{p} must be non-negative, got {v}", line_no=line_no)
        name = tokens[name_col]
        if name in names:
            raise InvalidCellValue(f"duplicate region {name!r}", line_no=line_no)
        names.append(name)
        values.append(row)

    if not lenient:
        if len(names) != len(regions):
            raise RegionCountMismatch(
                f"found {len(names)} cortical regions, expected {len(regions)}"
            )
        unknown = [n for n in names if n not in regions]
        if unknown:
            raise UnknownRegion(f"regions not in the configured atlas: {unknown}")

    X = np.array(values, dtype=np.float64).reshape(len(names), len(CORTICAL_PARAMS))
    return HemisphereTable(hemisphere, Kind.CORTICAL, names, CORTICAL_PARAMS, X)


def _aseg_lookup(by_name, side, base):
    for candidate in (base,) + STRUCTURE_ALIASES.get(base, ()):
        hit = by_name.get(f"{side}-{candidate}")
        if hit is not None:
            return hit
    return None


def parse_aseg_stats(text: str, *, structures: Sequence[str] = SUBCORTICAL_STRUCTURES):
    """Parse ``aseg.stats`` into ``(left, right)`` tables over ``structures``.

    Rows are paired by base name (``Left-Hippocampus`` / ``Right-Hippocampus``
    both land on row ``Hippocampus``). Structures not in the configured list
    are read and validated but not retained.
    """
    table = read_stats_table(text)
    name_col = table.index("StructName")
    cols = {p: table.index(_ASEG_COLUMNS[p]) for p in SUBCORTICAL_PARAMS}

    by_name = {}
    for line_no, tokens in table.rows:
        _check_numeric_row(table, line_no, tokens, {"StructName"})
        name = tokens[name_col]
        if name in by_name:
            raise InvalidCellValue(f"duplicate structure {name!r}", line_no=line_no)
        by_name[name] = (line_no, tokens)

    sides = {}
    for side in ("Left", "Right"):
        rows = []
        for base in structures:
            hit = _aseg_lookup(by_name, side, base)
            if hit is None:
                raise MissingStructure(f"structure {side}-{base} not found")
            line_no, tokens = hit
            row = [_number(tokens[cols[p]], _ASEG_COLUMNS[p], line_no) for p in SUBCORTICAL_PARAMS]
            _validate_subcortical(row, line_no)
            rows.append(row)
        X = np.array(rows, dtype=np.float64).reshape(len(structures), len(SUBCORTICAL_PARAMS))
        sides[side] = HemisphereTable(Hemisphere(side), Kind.SUBCORTICAL, structures, SUBCORTICAL_PARAMS, X)
    return sides["Left"], sides["Right"]


def _validate_subcortical(row, line_no):
    n_voxels, volume, norm_mean, norm_std, norm_max = row
    if n_voxels != int(n_voxels):
        raise NonNumericCell(f"NVoxels must be integral, got {n_voxels}", line_no=line_no)
    if n_voxels < 0 or volume < 0 or norm_std < 0:
        raise InvalidCellValue("NVoxels, Volume_mm3 and normStdDev must be non-negative",
                               line_no=line_no)
    if n_voxels > 0 and norm_max < norm_mean:
        raise InvalidCellValue(f"normMax {norm_max} below normMean {norm_mean}", line_no=line_no)


# -- cohorts -------------------------------------------------------------------

MANIFEST_FIELDS = ("subject_id", "label", "lh_aparc", "rh_aparc", "aseg")


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    label: Label
    lh_aparc: Path
    rh_aparc: Path
    aseg: Path


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in MANIFEST_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise ManifestError(f"{path}: manifest header lacks {missing}")
        entries, seen = [], set()
        for row in reader:
            sid = row["subject_id"].strip()
            if not sid:
                raise ManifestError(f"{path}: empty subject_id")
            if sid in seen:
                raise DuplicateSubjectId(f"{path}: subject id {sid!r} appears more than once")
            seen.add(sid)
            entries.append(ManifestEntry(
                sid, Label.parse(row["label"] or ""),
                *(base / row[k].strip() for k in ("lh_aparc", "rh_aparc", "aseg")),
            ))
    return entries


def load_subject(entry: ManifestEntry, *, lenient=False, regions=DK_REGIONS,
                 structures=SUBCORTICAL_STRUCTURES) -> SubjectScan:
    current = None
    try:
        current = entry.lh_aparc
        lh = parse_aparc_stats(_read(current), Hemisphere.LEFT, lenient=lenient, regions=regions)
        current = entry.rh_aparc
        rh = parse_aparc_stats(_read(current), Hemisphere.RIGHT, lenient=lenient, regions=regions)
        rh = rh.reordered(lh.region_labels)
        current = entry.aseg
        sl, sr = parse_aseg_stats(_read(current), structures=structures)
    except ParseError as exc:
        raise exc.annotate(subject_id=entry.subject_id, path=current)
    return SubjectScan(entry.subject_id, lh, rh, sl, sr, entry.label)


def _read(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc.strerror}") from exc


def load_cohort(manifest, *, lenient=False, regions=DK_REGIONS,
                structures=SUBCORTICAL_STRUCTURES, jobs=1) -> list[SubjectScan]:
    """Parse every subject listed in a manifest CSV, in manifest order."""
    entries = read_manifest(manifest)

    def load(entry):
        return load_subject(entry, lenient=lenient, regions=regions, structures=structures)

    if jobs > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(load, entries))
    return [load(e) for e in entries]


# -- parameter-table export ----------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def parameter_table_name(kind: Kind, param: str) -> str:
    return f"{kind.value.lower()}_{param}.csv"


def export_parameter_tables(cohort: Sequence[SubjectScan], out_dir) -> list[Path]:
    """Write one CSV per parameter (8 cortical + 5 subcortical).

    Each file has one row per subject; after ``subject_id`` and ``label``
    come the left-hemisphere region columns (``lh.<region>``) followed by
    the right-hemisphere ones (``rh.<region>``).
    """
    if not cohort:
        raise ValueError("cannot export an empty cohort")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    first = cohort[0]
    for kind, left0, _ in first.pairs():
        regions = left0.region_labels
        header = ["subject_id", "label"] + [f"lh.{r}" for r in regions] + [f"rh.{r}" for r in regions]
        for j, param in enumerate(left0.param_labels):
            path = out_dir / parameter_table_name(kind, param)
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                for scan in cohort:
                    _, left, right = next(p for p in scan.pairs() if p[0] is kind)
                    if left.region_labels != regions:
                        raise RegionMismatch("cohort subjects disagree on region order",
                                             subject_id=scan.subject_id)
                    writer.writerow(
                        [scan.subject_id, scan.label.token]
                        + [_fmt(v) for v in left.X[:, j]]
                        + [_fmt(v) for v in right.X[:, j]]
                    )
            written.append(path)
    return written


def load_parameter_tables(table_dir) -> list[SubjectScan]:
    """Rebuild a cohort from the 13 CSVs written by :func:`export_parameter_tables`."""
    table_dir = Path(table_dir)
    per_kind = {}
    subject_ids = labels = None
    for kind, params in ((Kind.CORTICAL, CORTICAL_PARAMS), (Kind.SUBCORTICAL, SUBCORTICAL_PARAMS)):
        blocks = []
        regions = None
        for param in params:
            path = table_dir / parameter_table_name(kind, param)
            if not path.exists():
                raise ManifestError(f"missing parameter table {path}")
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
            header, body = rows[0], rows[1:]
            lh = [h[3:] for h in header[2:] if h.startswith("lh.")]
            rh = [h[3:] for h in header[2:] if h.startswith("rh.")]
            if lh != rh or len(lh) * 2 != len(header) - 2:
                raise ManifestError(f"{path}: malformed region columns")
            if regions is None:
                regions = lh
            elif regions != lh:
                raise ManifestError(f"{path}: region columns differ from sibling tables")
            ids = [r[0] for r in body]
            labs = [Label.parse(r[1]) for r in body]
            if subject_ids is None:
                subject_ids, labels = ids, labs
            elif ids != subject_ids:
                raise ManifestError(f"{path}: subject order differs from sibling tables")
            vals = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64)
            blocks.append(vals.reshape(len(body), 2, len(regions)))
        # blocks: param -> (subjects, hemi, regions)
        per_kind[kind] = (regions, params, np.stack(blocks, axis=-1))

    cohort = []
    for i, sid in enumerate(subject_ids):
        tables = []
        for kind in (Kind.CORTICAL, Kind.SUBCORTICAL):
            regions, params, arr = per_kind[kind]
            for h, hemi in enumerate((Hemisphere.LEFT, Hemisphere.RIGHT)):
                tables.append(HemisphereTable(hemi, kind, regions, params, arr[i, h]))
        cohort.append(SubjectScan(sid, *tables, labels[i]))
    return cohort
