"""Exception hierarchy shared by the numerical modules and the CLI."""

from typing import Any


class FreeOTError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FreeOTError, ValueError):
    """A precondition on the inputs does not hold (support bound, range, size cap)."""


class ConvergenceError(FreeOTError, RuntimeError):
    """An iterative or bracketing procedure did not reach its target."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InconsistencyError(ConvergenceError):
    """Two independent evaluations of the same quantity disagree."""


class NotRealRootedError(ConvergenceError):
    """Root isolation found fewer real roots than the polynomial degree."""
