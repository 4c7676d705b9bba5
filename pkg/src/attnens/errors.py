"""Exception types shared across the library."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class PrecisionError(ValueError):
    """Operands mix single- and double-precision buffers."""


class ConfigError(ValueError):
    """A configuration value violates its documented range or structure."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values or failed a numeric audit."""


class CheckpointError(RuntimeError):
    """A checkpoint file is corrupt or structurally invalid."""


class UnsupportedVersionError(CheckpointError):
    """A checkpoint was written by an unknown format version."""


class TransferError(RuntimeError):
    """A source checkpoint cannot be grafted onto the requested model."""


class IngestError(RuntimeError):
    """A dataset file could not be read or failed validation."""


class ManifestError(IngestError):
    """The dataset manifest itself is malformed."""


class MissingBboxError(ValueError):
    """A sample has no bounding box but one is required."""


class MatrixParseError(RuntimeError):
    """A prediction-matrix CSV file is malformed."""


class AlignmentError(ValueError):
    """Prediction matrices or label tables disagree on sample identity."""


def reject_unknown_keys(mapping, allowed, context):
    """Raise ConfigError if ``mapping`` contains keys outside ``allowed``."""
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"{context}: unknown keys {unknown}")
