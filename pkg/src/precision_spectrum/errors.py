"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to, so the command line
front end never needs its own translation table.
"""

from __future__ import annotations


class SpectrumError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class InvalidSpectrumError(SpectrumError, ValueError):
    pass


class ShapeError(SpectrumError, ValueError):
    pass


class AspectRatioError(SpectrumError, ValueError):
    pass


class SingularSCMError(SpectrumError, ValueError):
    exit_code = 3


class DegenerateSpectrumError(SpectrumError, ValueError):
    """Tied sample eigenvalues; the closed forms divide by their differences."""

    exit_code = 3


class PoleError(SpectrumError, ValueError):
    """Evaluation point sits on (or numerically at) a pole."""


class ConvergenceError(SpectrumError, RuntimeError):
    exit_code = 4

    def __init__(self, message: str, residual: float = float("nan")) -> None:
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class NumericalError(SpectrumError, RuntimeError):
    """Root bracketing or similar numerical step failed."""

    exit_code = 4


class ContourError(SpectrumError, ValueError):
    """Contour does not enclose the expected set of sample eigenvalues."""

    exit_code = 4


class OracleMismatchError(SpectrumError, AssertionError):
    exit_code = 5


class ExcessiveExclusionsError(DegenerateSpectrumError):
    """More than the allowed share of Monte Carlo trials had tied eigenvalues."""
