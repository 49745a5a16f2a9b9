"""Exception hierarchy for the Burgers laboratory."""
from typing import Optional


class BurgersLabError(Exception):
    """Base class for all errors raised by the laboratory."""


class ConfigurationError(BurgersLabError, ValueError):
    """Invalid parameters; the message names the offending field."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class InsufficientRealizationsError(ConfigurationError):
    """Too few Monte Carlo realizations for a statistical assertion."""


class GridMismatchError(BurgersLabError, ValueError):
    """Arrays that must live on the same grid do not."""


class CFLViolationError(BurgersLabError):
    """The advective Courant number exceeded the configured safety factor."""

    def __init__(self, t: float, courant: float, limit: float):
        self.t = t
        self.courant = courant
        self.limit = limit
        super().__init__(
            f"CFL violation at t={t:.6g}: courant={courant:.4g} > {limit:.4g} (halve dt)"
        )


class NonPositiveFieldError(BurgersLabError):
    """The stochastic heat equation field lost strict positivity or finiteness."""


class DomainTooSmallError(BurgersLabError):
    """A construction needs more room than the torus provides."""


class FileFormatError(BurgersLabError, ValueError):
    """A binary file has the wrong magic, version or size."""
