"""Exception types shared across the package."""


class HopfieldFlowsError(Exception):
    """Base class for package errors."""


class DomainError(HopfieldFlowsError, ValueError):
    """A point lies outside (or too close to the boundary of) the open unit cube."""


class NumericError(HopfieldFlowsError, ArithmeticError):
    """An iterative solver failed to converge or produced non-finite values."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({extra})"


class ConfigError(HopfieldFlowsError, ValueError):
    """Invalid run configuration."""
