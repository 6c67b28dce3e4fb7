"""Exception hierarchy shared by all solver modules."""


class RelayError(Exception):
    """Base class for every error raised by :mod:`mimorelay`."""


class InvalidInputError(RelayError, ValueError):
    """Malformed input: wrong shape, non-finite entries, non-positive values."""


class IllConditionedError(RelayError):
    """A matrix is numerically singular.

    Attributes
    ----------
    condition : float
        Estimated 2-norm condition number of the offending matrix.
    """

    def __init__(self, message, condition):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


class NumericFailure(RelayError):
    """An iterative kernel failed to converge or produced a degenerate result."""


class InfeasibleAllocation(RelayError):
    """No positive power allocation meets the SINR targets."""


class UnsupportedInstance(RelayError):
    """The instance is outside the scheme's domain (e.g. rank deficiency)."""
