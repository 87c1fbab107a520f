"""Exception types shared across the package."""


class CmaLabError(Exception):
    """Base class for all package errors."""


class DomainError(CmaLabError, ValueError):
    """An argument lies outside its admissible range."""


class InfeasibleError(CmaLabError, ValueError):
    """No admissible exponent choice exists for the requested inputs."""


class ResolutionError(CmaLabError, ValueError):
    """A grid is too coarse for the requested operation."""


class CollarError(CmaLabError, ValueError):
    """A stencil reaches outside the data-carrying region of a field."""


class SupportError(CmaLabError, ValueError):
    """A convolution kernel does not fit inside the available data."""


class GeometryError(CmaLabError, ValueError):
    """Balls/boxes fail a required inclusion."""


class UnknownNameError(CmaLabError, KeyError):
    """Requested catalog entry does not exist."""


class DegenerateDataError(CmaLabError, ValueError):
    """Input data violates a positivity/monotonicity precondition."""


class ConvergenceError(CmaLabError, RuntimeError):
    """An iterative solve failed; carries the partial report when available."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
