class QDHomError(Exception):
    """Base class for errors raised by qdhom."""


class DomainError(QDHomError, ValueError):
    """An argument lies outside the domain of a physical formula."""


class UsageError(QDHomError, ValueError):
    """Inputs are inconsistent or insufficient for the requested operation."""


class ResolutionError(QDHomError, ValueError):
    """A sampling grid is too coarse to resolve a kernel or curve."""


class UndefinedPointError(QDHomError, ArithmeticError):
    """A ratio is requested at a point where its denominator vanishes."""
