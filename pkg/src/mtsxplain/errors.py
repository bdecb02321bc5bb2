"""Exception hierarchy.

``DataError`` subclasses describe malformed or mismatched inputs, ``NumericError``
subclasses describe numerical failures. The CLI maps the two families to exit
codes 3 and 4.
"""


class MtsxError(Exception):
    """Base class for every error raised by this package."""


class DataError(MtsxError):
    pass


class NumericError(MtsxError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class NonDivisibleWindow(DataError):
    pass


class MisalignedBox(DataError):
    pass


class InvalidPermutation(DataError):
    pass


class NotRescaled(DataError):
    pass


class DegenerateMask(DataError):
    pass


class DegenerateFold(DataError):
    pass


class TooManySegments(DataError):
    pass


class DomainError(DataError):
    pass


class NonFinite(NumericError):
    pass


class SingularSystem(NumericError):
    pass


class DegenerateSpread(NumericError):
    pass
