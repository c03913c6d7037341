"""Exception types shared across the package."""


class LveError(Exception):
    """Base class for all package errors."""


class EnumerationLimitError(LveError):
    """An enumeration was asked for more objects than its cap allows."""


class InvalidAssignmentError(LveError):
    """A weakening assignment is missing edges or has values outside [0, 1]."""


class DomainError(LveError, ValueError):
    """Arguments outside the mathematical domain of an operation."""


class CapabilityError(LveError):
    """A requested derivative or feature is not available for this input."""


class ContractViolation(LveError):
    """Input does not satisfy a documented precondition."""


class NumericError(LveError):
    """A quadrature or linear-algebra step failed to reach its tolerance."""


class ConstructionError(LveError):
    """A model could not be built with the requested parameters."""


class CancellationFailure(LveError):
    """A tadpole could not be paired with its counterterm twin."""
