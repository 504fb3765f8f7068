"""Exception types shared across the package.

The CLI maps each family to a fixed exit code (see :mod:`evatriage.cli`).
"""


class EvaError(Exception):
    """Base class for all package errors."""


class ParameterError(EvaError, ValueError):
    """Distribution parameters or arguments outside their domain."""


class DataError(EvaError, ValueError):
    """Input data is empty, malformed or too short for the operation."""


class BinningError(DataError):
    """Goodness-of-fit bins are unusable (empty expectation, overlapping bins)."""


class ConfigError(EvaError, ValueError):
    """Invalid run configuration (degrees of freedom, horizon, policy fields)."""


class NumericalFailure(EvaError, RuntimeError):
    """An optimizer did not converge.

    ``best_point`` carries the best parameter vector seen before giving up.
    """

    def __init__(self, message, best_point=None):
        super().__init__(message)
        self.best_point = best_point
