"""Provides the exception types raised when a run breaks one of the convergence assumptions or receives an invalid
scheduling kernel.

Both types are raised through the ataraxis console (console.error), so their messages are formatted the same way as
every other error emitted by the library.
"""


class AssumptionViolationError(RuntimeError):
    """Raised when a simulated process violates one of the assumptions under which its convergence is guaranteed.

    The message always cites the violated assumption tag, for example '(A1)(a)' for an iterate leaving the compact
    box or '(A4)(b)' for a reducible or periodic update scheduler. The experiment runner records these errors per
    replicate instead of aborting the whole experiment.
    """


class KernelValidityError(ValueError):
    """Raised when a transition kernel row evaluated during a run is not a probability vector."""
