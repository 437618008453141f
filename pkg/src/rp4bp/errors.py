"""Exception types shared across the package."""


class RP4BPError(Exception):
    """Base class for all package errors."""


class DomainError(RP4BPError, ValueError):
    """Input outside the domain where a transform or formula is defined."""


class SolverFailure(RP4BPError, RuntimeError):
    """An iterative solver did not converge within its iteration cap."""


class SingularityError(RP4BPError, ArithmeticError):
    """A state came too close to a collision with one of the bodies."""


class CorrectionFailure(SolverFailure):
    """Newton-based differential correction diverged or stalled.

    ``residual`` holds the last residual norm reached before giving up.
    """

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class FingerprintMismatch(RP4BPError):
    """A stored artifact was produced under different parameters."""
