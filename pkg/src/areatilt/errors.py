"""Exception hierarchy shared by all modules.

Numerical-certification failures (truncation, accuracy, degeneracy) derive from
``CertificationError`` so the CLI can map them to a single exit code.
"""


class AreaTiltError(Exception):
    """Base class for package errors."""


class DomainError(AreaTiltError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class CapacityError(AreaTiltError):
    """A precomputed table or memory budget is too small for the request."""

    def __init__(self, message, limit=None):
        super().__init__(message)
        self.limit = limit


class CertificationError(AreaTiltError):
    """A numerical result could not be certified to the requested tolerance."""


class TruncationError(CertificationError):
    """An infinite sum or integral cannot be truncated within tolerance."""

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class AccuracyError(CertificationError):
    """Two quadrature orders disagree by more than the tolerance."""

    def __init__(self, message, values=()):
        super().__init__(message)
        self.values = tuple(values)


class DegeneracyError(CertificationError):
    """Loss of orthogonality in the projection-DPP sampler."""


class RejectionBudgetError(AreaTiltError):
    """A rejection sampler exhausted its attempt budget."""

    def __init__(self, message, attempts=0, accepted=0):
        super().__init__(message)
        self.attempts = attempts
        self.accepted = accepted

    @property
    def acceptance_rate(self):
        return self.accepted / self.attempts if self.attempts else 0.0


class InfeasibleError(AreaTiltError, ValueError):
    """Boundary data admit no path (empty conditioning event)."""


class AlignmentError(AreaTiltError, ValueError):
    """Time grids do not line up for an exact node lookup."""


class ConfigError(AreaTiltError, ValueError):
    """Invalid experiment configuration."""
