"""Exception types shared across the package.

The CLI maps these onto process exit codes, so the hierarchy separates
"the numbers could not be computed" (solver / divergence trouble) from
"there is not enough data to ask the question".
"""

from __future__ import annotations


class CoriskError(Exception):
    """Base class for failures raised by this package."""


class SolverError(CoriskError):
    """A root search could not bracket or locate its target.

    Carries the bracket endpoints and the equation residuals seen there,
    so callers can report what the solver was looking at when it gave up.
    """

    def __init__(
        self,
        message: str,
        *,
        bracket: tuple[float, float] | None = None,
        residuals: tuple[float, float] | None = None,
    ) -> None:
        if bracket is not None:
            message += f" [bracket=({bracket[0]:.6g}, {bracket[1]:.6g})"
            if residuals is not None:
                message += f", residuals=({residuals[0]:.3g}, {residuals[1]:.3g})"
            message += "]"
        super().__init__(message)
        self.bracket = bracket
        self.residuals = residuals


class InfiniteTailError(CoriskError):
    """An expected-shortfall-type functional diverges for these parameters."""


class InsufficientDataError(CoriskError):
    """Too few observations to estimate the requested quantity."""


class PanelFormatError(CoriskError):
    """A returns panel could not be parsed in strict mode."""
