"""Exception hierarchy shared by all stages of the pipeline."""


class StellarError(Exception):
    """Base class for all errors raised by this package."""


class ZeroStateError(StellarError):
    """A state or polynomial that must be nonzero is (numerically) zero."""


class DimensionMismatch(StellarError):
    """Operands disagree on variable/mode count or matrix dimension."""


class Inconclusive(StellarError):
    """A numerical stage could not certify its result.

    Carries optional diagnostic payload (e.g. a partial factorization or the
    two candidate counts of an ambiguous rank decision).  Callers must treat
    this as "no verdict", never as a separability answer.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class Inconsistency(StellarError):
    """Two independent routes to the same quantity disagree.

    Signals either a numerical breakdown or an internal bug; like
    Inconclusive it must never be converted into a verdict.
    """


class PolyParseError(StellarError):
    """Syntax error in the polynomial text grammar, with position info."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class DocumentError(StellarError):
    """Schema violation in a structured document, with the offending path."""

    def __init__(self, message, path=""):
        super().__init__(f"{message} (at {path})" if path else message)
        self.path = path
