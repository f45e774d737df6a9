"""Exception hierarchy shared across the package."""


class GopsaError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(GopsaError, ValueError):
    """Input is malformed: non-finite entries, bad shapes, bad parameters."""


class NotPositiveDefinite(InvalidInput):
    """A matrix expected to be SPD has a non-positive eigenvalue."""


class DimensionMismatch(InvalidInput):
    """Operands have incompatible shapes."""


class ShapeMismatch(DimensionMismatch):
    """A file payload disagrees with the shape declared in its manifest."""


class NumericalOverflow(GopsaError, ArithmeticError):
    """A matrix function overflowed float64."""


class UndefinedMetric(GopsaError, ValueError):
    """A metric is undefined for the given input (e.g. constant vector)."""


class ConfigError(GopsaError, ValueError):
    """Benchmark or generator configuration is invalid."""


class MissingFile(GopsaError, FileNotFoundError):
    """A file referenced by a manifest does not exist."""


class ConvergenceFailure(GopsaError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    Parameters
    ----------
    message : str
        Human readable description.
    last_iterate : ndarray, optional
        The last iterate produced by the solver.
    residual : float, optional
        Residual at the last iterate.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
