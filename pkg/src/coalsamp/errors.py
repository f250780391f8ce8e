"""Exception hierarchy shared by every module."""


class CoalsampError(Exception):
    """Base class for all errors raised by coalsamp."""


class DomainError(CoalsampError, ValueError):
    """An argument lies outside the domain of an operation."""


class ValidationError(CoalsampError, ValueError):
    """Input data (a model file, a matrix, a configuration) is malformed."""


class SingularityError(CoalsampError):
    """A linear system that should have a unique solution does not."""


class ModelError(CoalsampError):
    """The mutation model does not satisfy a structural precondition."""


class UnsupportedError(CoalsampError):
    """The request is outside what the implementation covers."""


class SolverError(CoalsampError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResourceError(CoalsampError):
    """A table would exceed the configured memory budget."""
