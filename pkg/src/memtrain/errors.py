"""Exception types shared across the package.

Everything raised on purpose derives from MemtrainError so callers can
catch one base class at CLI boundaries.
"""

from __future__ import annotations


class MemtrainError(Exception):
    """Base class for all errors raised by this package."""


# --- device models ---------------------------------------------------------

class InvalidBounds(MemtrainError):
    """Conductance bounds are not an increasing positive pair."""


class NonPositiveGradient(MemtrainError):
    """A fitted update polynomial dips to zero or below on [0, 1]."""


class UnknownPulseWidth(MemtrainError):
    """Requested pulse width is not in the bundled device family."""


# --- measurement ingest and fitting ----------------------------------------

class ParseError(MemtrainError):
    """A measurement row failed to parse; carries the 1-based row number."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class SchemaError(MemtrainError):
    """File header or JSON document does not match the documented schema."""


class EmptySeries(MemtrainError):
    """Measurement file contained no data rows."""


class InsufficientPoints(MemtrainError):
    """Too few usable gradient samples in a polarity branch for the fit."""


class DegenerateRange(MemtrainError):
    """Observed conductance range is too narrow to normalize."""


class NoConvergence(MemtrainError):
    """Iterative procedure ran out of cycles; carries the best estimate."""

    def __init__(self, message: str, estimate: float, trace=None):
        super().__init__(message)
        self.estimate = estimate
        self.trace = trace


class SchemaVersionMismatch(MemtrainError):
    """Serialized document declares a schema version we do not read."""


class IoError(MemtrainError):
    """File could not be read or written."""


# --- tiles and training -----------------------------------------------------

class InvalidShape(MemtrainError):
    """Tile or network dimensions are not positive integers."""


class ShapeMismatch(MemtrainError):
    """Vector length does not match the tile dimension it feeds."""


class ConfigError(MemtrainError):
    """Experiment configuration failed validation."""


# --- datasets ----------------------------------------------------------------

class DataError(MemtrainError):
    """Base class for dataset loading failures."""


class BadMagic(DataError):
    """IDX file does not start with the expected magic number."""


class TruncatedFile(DataError):
    """IDX file ended before the payload announced in its header."""


class CountMismatch(DataError):
    """Image and label files disagree on the number of records."""


# --- energy ------------------------------------------------------------------

class NegativeVoltage(MemtrainError):
    """Schottky current is only defined for non-negative bias here."""


# --- sweeps ------------------------------------------------------------------

class MissingRuns(MemtrainError):
    """Report requested on a directory with no completed runs."""
