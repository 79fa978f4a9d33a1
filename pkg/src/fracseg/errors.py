"""Exception hierarchy shared by every module."""


class FracSegError(Exception):
    """Base class for all package errors."""


class DomainError(FracSegError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(FracSegError, ValueError):
    """Invalid grid, solver or run configuration."""


class StructuralError(FracSegError, ValueError):
    """Arrays or fields do not conform to the grid they are used with."""


class NumericalError(FracSegError, RuntimeError):
    """An iterative numerical method failed to converge."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SolverError(NumericalError):
    """The nonlinear profile solve did not converge."""


class PositivityError(NumericalError):
    """A solution that must be nonnegative went negative."""


class DegenerateFieldError(FracSegError, ValueError):
    """A normalising integral vanished on a nontrivial field."""


class FitError(FracSegError, ValueError):
    """A log-linear or asymptotic fit could not be carried out."""


class HypothesisError(FracSegError, ValueError):
    """A theorem hypothesis required by an operation does not hold."""


class TruncationError(FracSegError, ValueError):
    """A truncated integral or convolution lost too much mass."""
