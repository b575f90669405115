"""Exception hierarchy.  ``exit_code`` is what the CLI returns for each kind."""


class GraphexError(Exception):
    exit_code = 1


class DomainError(GraphexError, ValueError):
    """An argument is outside the domain of the operation."""

    exit_code = 2


class ConfigError(GraphexError, ValueError):
    exit_code = 2


class NumericError(GraphexError, ArithmeticError):
    exit_code = 3


class QuadratureError(NumericError):
    """Adaptive quadrature did not reach its tolerance."""

    def __init__(self, message, value=None, error_estimate=None):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate


class BracketError(NumericError):
    """Root finding could not bracket a sign change."""


class FitError(NumericError):
    """Tail-index regression could not reach the R^2 target."""

    def __init__(self, message, best_r_squared=None):
        super().__init__(message)
        self.best_r_squared = best_r_squared


class CapacityError(GraphexError, MemoryError):
    """A configured size guard would be exceeded."""

    exit_code = 4
