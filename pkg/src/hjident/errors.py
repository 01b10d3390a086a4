"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for invalid input, 3 for degenerate input, 4 for numerical failure.
"""

from __future__ import annotations


class HJError(Exception):
    exit_code = 4


class ValidationError(HJError, ValueError):
    """Input violates a documented precondition."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(ValidationError):
    """Parameter outside its admissible domain (e.g. rho = 0)."""


class PreconditionError(ValidationError):
    pass


class TieError(ValidationError):
    def __init__(self, message: str, indices: tuple[int, ...] = ()):
        self.indices = tuple(indices)
        super().__init__(message)


class MalformedSnakeError(ValidationError):
    pass


class NotComparableError(ValidationError):
    pass


class NotFlippableError(ValidationError):
    pass


class CapabilityError(ValidationError):
    pass


class InfeasibleTransformError(ValidationError):
    pass


class MalformedProfitError(ValidationError):
    pass


class DegenerateArrangementError(HJError):
    """Three lines (or level curves) pass through a common point."""

    exit_code = 3

    def __init__(self, message: str, triple: tuple[int, int, int] | None = None):
        self.triple = triple
        super().__init__(message)


class AmbiguousThetaError(HJError):
    """A support point sits on a level set, so the loading indicator is ambiguous."""

    exit_code = 3


class NumericRangeError(HJError, ArithmeticError):
    exit_code = 4


class NumericFailureError(HJError):
    exit_code = 4


class ConsistencyError(HJError):
    """An internal invariant that theory guarantees was observed to fail."""

    exit_code = 4
