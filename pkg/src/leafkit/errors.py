"""Shared exception types."""


class LeafkitError(Exception):
    pass


class ValidationError(LeafkitError, ValueError):
    """Input violates a documented precondition or invariant."""


class ParseError(LeafkitError, ValueError):
    """A file could not be parsed; message carries position information."""


class DegenerateInputError(ValidationError):
    """A batch is too uniform for the requested statistic (e.g. all-constant
    indicator matrix for entropy weighting)."""
