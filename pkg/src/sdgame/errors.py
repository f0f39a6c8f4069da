"""Exception types shared across the package."""


class SDGameError(Exception):
    """Base class for package errors."""


class ConfigError(SDGameError, ValueError):
    """Malformed problem/grid configuration."""


class ValidationError(SDGameError, ValueError):
    """A declared hypothesis or precondition does not hold."""


class RegimeError(ValidationError):
    """Epstein-Zin parameters outside the admissible regimes."""


class DomainError(SDGameError, ArithmeticError):
    """A coefficient was evaluated outside its domain.

    ``point`` carries whatever location information the caller had, e.g.
    ``{"t": ..., "x": ..., "y": ...}``.
    """

    def __init__(self, message: str, point: dict | None = None):
        super().__init__(message if point is None else f"{message} at {point}")
        self.point = point or {}


class NumericalAbort(SDGameError, ArithmeticError):
    """Non-finite values, failed fixed-point iterations or CFL violations."""

    def __init__(self, message: str, point: dict | None = None):
        super().__init__(message if point is None else f"{message} at {point}")
        self.point = point or {}


class CFLError(NumericalAbort):
    """Time step above the stability bound of the explicit scheme."""
