"""
Exception hierarchy for the committee machine analysis.

Validation problems raise ConfigError; everything that goes wrong inside the
numerics raises a NumericalError subclass. Non-convergence is reported on the
result objects, never raised.
"""

from typing import Optional


class CommitteeMachineError(Exception):
    """Root of all errors raised by this package."""


class ConfigError(CommitteeMachineError, ValueError):
    """
    Invalid sweep or model configuration.

    Attributes:
        field: Name of the offending field, if a single one is at fault
        diagnostics: Every diagnostic collected during validation
    """

    def __init__(self, message: str, field: Optional[str] = None, diagnostics: Optional[list[str]] = None):
        super().__init__(message)
        self.field = field
        self.diagnostics = diagnostics or [message]


class NumericalError(CommitteeMachineError):
    """A numerical precondition failed."""


class NonPsd(NumericalError):
    """Matrix has an eigenvalue below the PSD tolerance."""


class SingularCovariance(NumericalError):
    """Covariance matrix cannot be inverted."""


class ZeroMass(NumericalError):
    """Orthant mass underflowed; the outcome is impossible."""


class UnsupportedLabel(NumericalError):
    """Label outside the channel's support."""


class ImpossibleOutcome(NumericalError):
    """Observed label has (numerically) zero likelihood."""


# AMP reports underflow of z_out under this name
ChannelUnderflow = ImpossibleOutcome


class SingularSigma(NumericalError):
    """Prior-side covariance Sigma is singular."""


class DomainError(NumericalError):
    """Argument outside the mathematical domain of the operation."""


class NonPdCovariance(NumericalError):
    """Covariance stayed non positive definite after eigenvalue repair."""


class BracketError(NumericalError):
    """Transition indicator has the same value at both ends of the bracket."""

    def __init__(self, message: str, lo: float | None = None, hi: float | None = None):
        super().__init__(message)
        self.lo = lo
        self.hi = hi
