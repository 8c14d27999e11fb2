"""Exception types shared across the package."""


class CountFieldError(Exception):
    """Base class for countfield-specific failures."""


class SeriesTruncationError(CountFieldError):
    """A series evaluation hit its term cap before reaching tolerance."""


class NumericalError(CountFieldError):
    """A numerical consistency check failed (indefinite covariance,
    probability outside [0, 1] beyond rounding tolerance, ...)."""


class NoPairsError(CountFieldError):
    """No location pair qualifies under the given cut-off weights."""


class NonConvergenceError(CountFieldError):
    """An optimizer finished without meeting its convergence criteria."""


class DataError(CountFieldError):
    """Input data is malformed or inconsistent with the model."""
