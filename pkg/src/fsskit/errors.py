"""
fsskit exception hierarchy.

Every error carries an ``exit_code`` that the command-line front-end returns:
2 for invalid input, 1 for a failed certificate, 3 for a numerical failure.
"""
from typing import Optional


class FsskitError(Exception):
    """Base class for all fsskit errors."""

    exit_code = 3


class SpecError(FsskitError, ValueError):
    """Invalid scenario, descriptor or system data."""

    exit_code = 2


class MalformedCoefficientError(SpecError):
    """A coefficient evaluated to a non-finite value."""


class DomainError(FsskitError, ValueError):
    """An argument lies outside the domain of an operation (λ = 0, α < 0, ...)."""

    exit_code = 2


class OutOfRangeError(DomainError):
    """Phase inverse requested above the asymptotic range of p."""


class SectorError(DomainError):
    """λ lies outside the closure of the requested region."""


class OrderingError(DomainError):
    """The ordering Re(λb_j) ≥ Re(λω) ≥ Re(λb_l) is violated."""


class CertificateError(FsskitError):
    """A verification certificate failed."""

    exit_code = 1


class ThresholdError(CertificateError):
    """The two-step contraction bound is not below 1/2 at the requested λ."""

    def __init__(self, message: str, bound: float = float("nan"), hint: Optional[float] = None):
        super().__init__(message)
        self.bound = bound
        self.hint = hint


class DegeneracyError(CertificateError):
    """A supplemented system has a (numerically) vanishing determinant."""


class SearchError(CertificateError):
    """No admissible radius found during a threshold search."""


class NumericalError(FsskitError):
    """A numerical procedure failed to deliver a result."""

    exit_code = 3


class IntegrationError(NumericalError):
    """An initial-value solve failed or a consistency cross-check did not hold."""


class DivergenceError(NumericalError):
    """Successive approximations hit the iteration cap."""
