"""Exception types shared across the package."""


class RbaError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RbaError, ValueError):
    """An argument violates a structural precondition (shape, unit norm, ...)."""


class DomainError(RbaError, ValueError):
    """A parameter lies outside the domain where the quantity is defined."""


class EnvelopeError(DomainError):
    """A parameter exceeds the validated numerical envelope of a routine."""


class ConvergenceError(RbaError, RuntimeError):
    """An iterative procedure failed to reach its tolerance."""
