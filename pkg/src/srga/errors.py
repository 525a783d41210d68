"""Exception hierarchy shared by all srga modules.

Exit-code contract for the CLI: ValidationError maps to exit code 2,
NumericError to exit code 3.
"""


class SrgaError(Exception):
    """Base class for all srga errors."""


class ValidationError(SrgaError, ValueError):
    """Bad inputs, broken preconditions, or contract violations."""


class FormatError(ValidationError):
    """A feature file violates the on-disk format contract."""


class DataError(ValidationError):
    """A payload is structurally valid but contains bad data (NaN/Inf)."""


class NumericError(SrgaError, ArithmeticError):
    """Degenerate data or a numerically impossible fit."""
