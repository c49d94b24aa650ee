"""
Error hierarchy shared by every service.

The CLI maps these onto exit statuses; inconclusive results are reported,
never raised.
"""


class AnisoError(Exception):
    """Base class of toolkit errors"""

    exit_status = 4


class DomainError(AnisoError, ValueError):
    """An operation was called outside its precondition"""

    exit_status = 3


class ConfigError(AnisoError, ValueError):
    """Invalid experiment configuration"""

    exit_status = 3


class NumericError(AnisoError, ArithmeticError):
    """A root bracket or quadrature could not be established"""


class InvariantViolation(AnisoError, AssertionError):
    """A runtime invariant (multiplier bound, acceptance probability) broke"""
