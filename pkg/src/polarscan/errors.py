"""Exception hierarchy shared across the pipeline."""


class PolarscanError(Exception):
    """Base class for all library errors."""


class FormatError(PolarscanError, ValueError):
    """Malformed file or byte stream (bad magic, bad header, bad layout)."""


class ParseError(PolarscanError, ValueError):
    """A value inside an otherwise well-formed stream could not be parsed."""


class ValidationError(PolarscanError, ValueError):
    """An argument or loaded value violates a documented precondition."""


class DegenerateInputError(PolarscanError, ValueError):
    """Input is too small or too empty for the operation to be meaningful."""


class ShapeError(PolarscanError, ValueError):
    """Array dimensions do not line up."""


class JoinError(PolarscanError, KeyError):
    """A cross-reference (e.g. descriptor frame vs. pose table) failed."""


class ConfigError(PolarscanError, ValueError):
    """Run configuration is inconsistent or references missing paths."""


class ChannelLookupError(PolarscanError, KeyError):
    """A requested image channel is not present."""
