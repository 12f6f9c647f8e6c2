"""
Exceptions raised by the numerics and the command-line layer.

Every error carries a human-readable message and the process exit code the
CLI reports when it escapes a command.
"""

from __future__ import annotations

from typing import Any


class IfdmError(Exception):
    """Base class for all package errors."""

    def __init__(self, message="Solver error", exit_code=1):
        super().__init__(message)
        self.exit_code = exit_code
        self.message = message


class InvalidFieldError(IfdmError):
    """Exception raised when a field holds NaN or infinite values."""

    def __init__(self, message="Field contains non-finite values", exit_code=1):
        super().__init__(message, exit_code)


class UnsupportedBackendError(IfdmError):
    """Exception raised when an operator is requested on a backend that cannot provide it."""

    def __init__(self, message="Operation not supported by this derivative backend", exit_code=1):
        super().__init__(message, exit_code)


class ArgumentError(IfdmError):
    def __init__(self, message="Invalid argument", exit_code=1):
        super().__init__(message, exit_code)


class NotCurlSolvableError(IfdmError):
    """Exception raised when a row of alpha has nonzero mean, so curl chi = alpha has no periodic solution."""

    def __init__(self, message="Field row has nonzero mean; no periodic vector potential exists", exit_code=1):
        super().__init__(message, exit_code)


class IllPosedPotentialError(IfdmError):
    """Exception raised when a row of alpha is not divergence-free."""

    def __init__(self, message="Field row is not divergence-free; vector potential is ill-posed", exit_code=1):
        super().__init__(message, exit_code)


class InsufficientDataError(IfdmError):
    def __init__(self, message="Not enough time levels", exit_code=1):
        super().__init__(message, exit_code)


class StepSizeError(IfdmError):
    """Exception raised when a forward step violates the CFL bound."""

    def __init__(self, message="Time step violates the CFL bound", exit_code=2, cfl: float | None = None):
        super().__init__(message, exit_code)
        self.cfl = cfl


class NumericalAbortError(IfdmError):
    """Exception raised when a forward run produces NaN; carries the last finite state."""

    def __init__(self, message="Non-finite values detected", exit_code=3, last_state: Any = None, time: float | None = None):
        super().__init__(message, exit_code)
        self.last_state = last_state
        self.time = time


class MappingFailureError(IfdmError):
    """
    Exception raised when K is not safely positive definite at a collocation point.

    The optimizer treats this as a signal to shrink its step.
    """

    def __init__(self, message="Dual-to-primal mapping failed", exit_code=1, point: int | None = None, pivot: float | None = None):
        super().__init__(message, exit_code)
        self.point = point
        self.pivot = pivot


class InvalidInputError(IfdmError):
    def __init__(self, message="Non-finite input to the mapping", exit_code=1):
        super().__init__(message, exit_code)


class ConfigError(IfdmError):
    """Exception raised for unreadable or invalid run configurations."""

    def __init__(self, message="Invalid configuration", exit_code=2, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, exit_code)
        self.line = line


class BaseStateMissingError(IfdmError):
    """Exception raised when a base-state file or directory cannot be found."""

    def __init__(self, message="Base state not found", exit_code=2, path: str | None = None):
        if path is not None:
            message = f"{message}: {path}"
        super().__init__(message, exit_code)
        self.path = path
