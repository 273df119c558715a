"""Shared exception types."""


class ParameterError(ValueError):
    """Raised when an operation is called with invalid parameters."""


class StateSpaceTooLarge(ParameterError):
    """Raised when an exact computation would exceed its state-space guard."""


class InvariantError(RuntimeError):
    """Raised when an internal invariant is violated; indicates a bug, not bad input."""
