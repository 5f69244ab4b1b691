"""Exception hierarchy shared by every uqpkit module.

Contract violations raise one of these instead of bare ValueError so that
callers (and the CLI exit-code mapping) can tell usage errors, I/O trouble,
and capability limits apart.
"""


class UqpError(Exception):
    """Base class for all uqpkit errors."""


class DimensionMismatch(UqpError):
    """Operands whose shapes cannot be combined."""


class InvalidShape(UqpError):
    """An array that is not the expected rank or not square where required."""


class NotSymmetric(UqpError):
    """A matrix that fails the symmetry tolerance check."""


class NotPositiveDefinite(UqpError):
    """Cholesky pivot at or below the pivot tolerance."""


class IndexOutOfRange(UqpError):
    """A coordinate or block index outside [0, n)."""


class InvalidPartition(UqpError):
    """Blocks that are empty, overlapping, or fail to cover [0, n)."""


class TooLargeForDirect(UqpError):
    """Problem dimension above the dense direct-solve / eigensolve cap."""


class SingularBlockGram(UqpError):
    """A block Gram matrix P_pi P_pi^T that is numerically singular."""


class RankDeficient(UqpError):
    """A direction matrix without full column rank."""


class InvalidStrategyConfig(UqpError):
    """A method/strategy pairing or strategy precondition that does not hold."""


class HdcViolation(UqpError):
    """A configuration outside the high-dimension-compliant envelope,
    refused because the non-HDC override was not given."""


class NonFinite(UqpError):
    """An iterate or metric left the finite floating-point range."""


class InvalidAssignment(UqpError):
    """A block-to-node map that does not cover the blocks in a trace."""


class NumericalError(UqpError):
    """An internal numerical routine failed to meet its accuracy target."""


class IoError(UqpError):
    """A filesystem-level failure while reading or writing a block store."""


class ChecksumError(IoError):
    """Stored CRC32 does not match file contents."""
