"""Exception hierarchy shared by all predcomb modules."""

from __future__ import annotations


class PredCombError(Exception):
    """Base class for every error raised by predcomb."""


class NumericalError(PredCombError):
    """A numerical routine could not produce a valid result."""


class ZeroVarianceError(NumericalError):
    """A predictor is constant and cannot be centered and normalized."""


class DimensionMismatch(PredCombError, ValueError):
    pass


class SingularSystem(NumericalError):
    pass


class NonPositiveNoise(PredCombError, ValueError):
    pass


class BasisCountOutOfRange(PredCombError, ValueError):
    pass


class NumericalOverflow(NumericalError):
    pass


class DegenerateTarget(NumericalError):
    pass


class EmptyGrid(PredCombError, ValueError):
    pass


class LengthMismatch(PredCombError, ValueError):
    pass


class LabelOutOfRange(PredCombError, ValueError):
    pass


class ParseError(PredCombError, ValueError):
    """Malformed dataset file; carries the offending row/column when known."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column
