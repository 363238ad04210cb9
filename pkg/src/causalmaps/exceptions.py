"""Exception hierarchy for causalmaps.

Every error raised on purpose by this package derives from
:class:`CausalmapsError`, so callers can catch the whole family at once.
"""


class CausalmapsError(Exception):
    """Base class for all causalmaps errors."""


class ZeroStackError(CausalmapsError):
    """The global maximum of a feature stack (or embedding set) is zero.

    An all-zero stack carries no co-occurrence signal and cannot be
    normalized.
    """


class NumericOverflowError(CausalmapsError):
    """An intermediate of the map computation became non-finite.

    Usually means the Lehmer exponent is too extreme for the value range
    of the data.
    """


class EmptyVectorError(CausalmapsError):
    """A mean was requested over an empty vector."""


class ShapeMismatchError(CausalmapsError):
    """Array shapes disagree with the operation's contract."""


class EmptyBatchError(CausalmapsError):
    """A batch-reduction was requested over an empty batch."""


class DegenerateTargetError(CausalmapsError):
    """A target distribution has negative mass or does not sum to one."""


class NonFiniteGradientError(CausalmapsError):
    """A scorer or regularizer returned a non-finite gradient.

    Carries the iteration index at which the ascent was aborted.
    """

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite gradient at iteration {iteration}")


class DivergedLossError(CausalmapsError):
    """The training loss became non-finite."""
