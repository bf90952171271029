"""Exception types raised across the package."""

import numpy as np


class DomainError(ValueError):
    """A value lies outside the support or domain of a function."""


class ParameterError(ValueError):
    """A distribution or model parameter is invalid."""


class ShapeError(ValueError):
    """Array shapes or lengths are inconsistent."""


class StateError(RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class SingularDesignError(np.linalg.LinAlgError):
    """The design matrix is rank deficient."""

    def __init__(self, message, columns=()):
        self.columns = list(columns)
        super().__init__(message)


class ConvergenceError(RuntimeError):
    """An iterative fit did not converge."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class ConfigError(ValueError):
    """A run configuration is invalid."""
