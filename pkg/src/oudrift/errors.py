"""Exception types raised by oudrift."""


class OUError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(OUError, ValueError):
    """Operands have incompatible or invalid shapes."""


class NonFiniteError(OUError, ValueError):
    """A matrix contains NaN or Inf entries."""


class ExpOverflowError(OUError, OverflowError):
    """The requested matrix exponential is too large to represent."""


class AmbiguousSpectrumError(OUError, ValueError):
    """An eigenvalue lies too close to a classification boundary."""


class DomainError(OUError, ValueError):
    """An operation was called outside its mathematical domain."""


class KernelError(OUError, ArithmeticError):
    """A numerical kernel failed (non-convergence, indefinite covariance)."""


class SingularStatsError(OUError, ArithmeticError):
    """The observed information matrix C_T is numerically singular.

    Attributes
    ----------
    lambda_min : float
        Smallest eigenvalue of C_T at the time of failure.
    """

    def __init__(self, message, lambda_min):
        super().__init__(message)
        self.lambda_min = lambda_min


class RankConditionError(OUError, ValueError):
    """The controllability RANK condition fails for (F, A)."""

    def __init__(self, message, rank):
        super().__init__(message)
        self.rank = rank


class ConfigError(OUError, ValueError):
    """Invalid experiment, model or CLI configuration."""
