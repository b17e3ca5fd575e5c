"""Exception types shared across the package."""
from __future__ import annotations


class RobustUtilError(Exception):
    """Base class for all package errors."""


class ValidationError(RobustUtilError, ValueError):
    """Invalid input data (schema, shapes, invariants)."""


class ScenarioError(ValidationError):
    """Scenario file failed to parse or validate."""


class DomainError(RobustUtilError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConvergenceError(RobustUtilError, RuntimeError):
    """An iterative routine failed to converge."""


class NonConvergence(ConvergenceError):
    """Solver terminated without meeting its tolerance.

    Carries the best iterate's residuals in ``report`` when available.
    """

    def __init__(self, message: str, report: object | None = None) -> None:
        super().__init__(message)
        self.report = report


class InfeasibleModel(RobustUtilError, RuntimeError):
    """The constraint polytope admits no density."""


class UnboundedDual(RobustUtilError, RuntimeError):
    """Dual objective exceeded its cap along an ascent ray.

    Signals a possible qualification failure; the exact failing condition
    is not classified (indistinguishable at floating-point scale).
    """


class BracketFailure(ConvergenceError):
    """A one-dimensional search could not bracket its target."""
