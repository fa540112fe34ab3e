"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies on or outside the boundary of its domain."""


class NumericError(ArithmeticError):
    """A computation produced non-finite or indefinite quantities."""


class ConvergenceError(RuntimeError):
    """An iterative solver missed its tolerance; ``residual`` holds the last value."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class ContractError(ValueError):
    """An input violates a documented precondition."""


class CapacityError(ValueError):
    """An enumeration would exceed its size budget."""


class ConfigError(ValueError):
    """An experiment description is malformed or names unknown things."""


class InvariantError(AssertionError):
    """An internal guarantee failed; signals a bug rather than bad input."""
