"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Input has the wrong shape, contains non-finite values, or is out of range."""


class NotPSDError(InvalidInputError):
    """A matrix expected to be positive semi-definite has a clearly negative eigenvalue."""

    def __init__(self, eigenvalue, tolerance):
        self.eigenvalue = eigenvalue
        self.tolerance = tolerance
        super().__init__(
            f"matrix is not positive semi-definite: eigenvalue {eigenvalue:.6g} "
            f"is below -{tolerance:.3g}"
        )


class NumericalFailureError(ArithmeticError):
    """A computation overflowed or hit a singular system."""


class FormatError(ValueError):
    """A data file does not follow its declared format.

    ``offset`` is a byte offset for binary files, ``line`` a 1-based line
    number for text files; whichever does not apply is None.
    """

    def __init__(self, message, *, offset=None, line=None):
        self.offset = offset
        self.line = line
        where = []
        if offset is not None:
            where.append(f"byte offset {offset}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
