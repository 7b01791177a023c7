"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract:

* :class:`InputError`      -> exit 2 (bad input, violated precondition, unmet hypothesis)
* :class:`PrecisionCapError` -> exit 3 (certified computation hit the precision cap)
* :class:`StatisticalFailure` -> exit 4 (a statistical verification did not pass)

Everything else is a bug and propagates as a plain traceback.
"""

from __future__ import annotations


class NormalisError(Exception):
    """Base class for all package-specific errors."""


class InputError(NormalisError, ValueError):
    """Invalid input: malformed config, out-of-range parameter, violated precondition."""


class DegenerateMeasureError(InputError):
    """The requested construction collapses to an atom (fewer than two maps survive trimming)."""


class ReduciblePolynomialError(InputError):
    """A polynomial that must be irreducible factors over the rationals.

    Carries one nontrivial factor so the caller can see *why* the input was rejected.
    """

    def __init__(self, message: str, factor=None):
        super().__init__(message)
        self.factor = factor


class PrecisionCapError(NormalisError):
    """Raised when escalating precision reaches the configured hard cap.

    Attributes
    ----------
    bits_used : int
        The precision (in bits) at which the computation gave up.
    """

    def __init__(self, message: str, bits_used: int = 0):
        super().__init__(message)
        self.bits_used = bits_used


class UndecidableError(PrecisionCapError):
    """A certified decision (e.g. a Pisot verdict) could not be resolved below the cap."""


class StatisticalFailure(NormalisError):
    """A statistical check (KS, chi-square, ensemble pass-rate) failed."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class QuadratureError(NormalisError):
    """Adaptive quadrature could not reach the requested error tolerance."""

    def __init__(self, message: str, achieved_error: float = float("inf")):
        super().__init__(message)
        self.achieved_error = achieved_error


class InsufficientDepthError(InputError):
    """An operation needs a longer digit word / deeper sample than was provided."""

    def __init__(self, message: str, required: int = 0):
        super().__init__(message)
        self.required = required
