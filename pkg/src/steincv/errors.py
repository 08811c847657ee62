"""Exception hierarchy shared by all steincv modules."""


class SteinCVError(ValueError):
    """Base class for every error raised deliberately by steincv."""


class DimensionError(SteinCVError):
    """Array shapes or dimensions do not agree."""


class IdentifiabilityError(SteinCVError):
    """Too few samples (rows) for the number of regression parameters."""


class SingularDesignError(SteinCVError):
    """The (centred) design matrix is numerically rank deficient.

    Attributes:
        columns: indices of the columns judged linearly dependent.
    """

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(int(c) for c in columns)


class ConvergenceError(SteinCVError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, iterations=0, max_change=float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.max_change = max_change


class SpecParseError(SteinCVError):
    """A method, target or integrand specification string is malformed."""
