"""Exception types shared across the package."""


class InvalidCloudError(ValueError):
    """Point cloud violates a structural precondition (shape, finiteness)."""


class ParseError(ValueError):
    """A file could not be parsed; message carries file name and line number."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class NumericOverflowError(ArithmeticError):
    """A forward/backward pass produced a non-finite value; names the layer."""


class InvalidDistributionError(ValueError):
    """Input to an entropy computation is not a probability distribution."""


class DegenerateInfluenceError(ValueError):
    """Influence map sums to zero and cannot be normalized."""


class UndefinedCEError(ValueError):
    """Corruption error is undefined because the pivot is perfect on a family."""
