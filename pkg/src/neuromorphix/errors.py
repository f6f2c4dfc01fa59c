"""Exception hierarchy.

Input/validation problems derive from :class:`InputError` (CLI exit code 2);
numeric degeneracies derive from :class:`NumericError` (exit code 3).
"""


class NeuroMorphixError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class InputError(NeuroMorphixError):
    exit_code = 2


class NumericError(NeuroMorphixError):
    exit_code = 3


# -- stats-file parsing ------------------------------------------------------

class ParseError(InputError):
    """A stats file could not be turned into a table.

    ``subject_id`` and ``path`` are filled in by the cohort loader so the
    message points at the offending input.
    """

    def __init__(self, message, *, line_no=None, subject_id=None, path=None):
        self.detail = message
        self.line_no = line_no
        self.subject_id = subject_id
        self.path = path
        super().__init__(self._render())

    def _render(self):
        parts = []
        if self.subject_id is not None:
            parts.append(f"subject {self.subject_id!r}")
        if self.path is not None:
            parts.append(str(self.path))
        if self.line_no is not None:
            parts.append(f"line {self.line_no}")
        prefix = ": ".join(parts)
        return f"{prefix}: {self.detail}" if prefix else self.detail

    def annotate(self, subject_id=None, path=None):
        if subject_id is not None:
            self.subject_id = subject_id
        if path is not None:
            self.path = path
        self.args = (self._render(),)
        return self


class MalformedHeader(ParseError):
    pass


class UnknownColumn(ParseError):
    pass


class RowArityMismatch(ParseError):
    pass


class NonNumericCell(ParseError):
    pass


class InvalidCellValue(ParseError):
    pass


class RegionCountMismatch(ParseError):
    pass


class UnknownRegion(ParseError):
    pass


class MissingStructure(ParseError):
    pass


class RegionMismatch(ParseError):
    """Left and right tables do not cover the same regions."""


class ManifestError(InputError):
    pass


class DuplicateSubjectId(ManifestError):
    pass


# -- data / model validation -------------------------------------------------

class UnlabeledSubject(InputError):
    pass


class SingleClassInput(InputError):
    pass


class TooFewMinoritySamples(InputError):
    pass


class ClassTooSmall(InputError):
    pass


class NonFiniteFeature(InputError):
    pass


class ArityMismatch(InputError):
    pass


class WrongTraceKind(InputError):
    pass


class ConfigError(InputError):
    pass


class InvalidSpec(ConfigError):
    pass


# -- numeric degeneracies ----------------------------------------------------

class ZeroNormVector(NumericError):
    pass


class DegenerateMean(NumericError):
    pass


class UndefinedMetric(NumericError):
    pass


class StageError(NeuroMorphixError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
