"""Exception hierarchy shared by every analysis module."""

from __future__ import annotations


class SwinvError(Exception):
    """Base class for all errors raised by the package."""


class SystemValidationError(SwinvError, ValueError):
    """Raised when raw matrices do not form a valid switched affine system.

    Attributes:
        problems: Every violated invariant, one human-readable line each.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NoEquilibriumError(SwinvError):
    """Raised when a mode matrix is singular, so no isolated equilibrium exists."""

    def __init__(self, message: str, condition: float):
        self.condition = condition
        super().__init__(f"{message} (condition number estimate {condition:.3e})")


class InfeasibleError(SwinvError):
    """The optimization problem has no solution for the requested parameters."""


class NumericFailure(SwinvError):
    """The solver failed or returned a point that does not pass re-verification."""


class CertificateInconsistency(SwinvError):
    """A certificate fails an independent consistency check."""


class StallError(SwinvError):
    """An iterative procedure could not make progress."""


class IterationLimitError(SwinvError):
    """An iterative procedure hit its iteration cap.

    Attributes:
        partial: The last accepted state, for inspection.
    """

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)
