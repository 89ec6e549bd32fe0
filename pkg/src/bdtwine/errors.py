"""Error types shared across the package.

The split matters for callers: parameter and model errors mean the request
itself is malformed, precondition errors mean the math does not apply to the
given input, and numerical failures mean a computation could not meet its
accuracy contract.
"""


class BdtwineError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(BdtwineError, ValueError):
    """A scalar argument is out of range (non-positive rate, bad tolerance, ...)."""


class InvalidModelError(BdtwineError, ValueError):
    """A rate specification violates the birth-death chain contract."""


class PreconditionError(BdtwineError, ValueError):
    """An operation's mathematical hypotheses fail for the given input."""


class NumericalFailureError(BdtwineError, RuntimeError):
    """A computation finished but could not certify its accuracy target."""


class SizeGuardError(BdtwineError, ValueError):
    """An exact/dense routine was asked for a problem above its size cap."""


class InfeasibleError(BdtwineError, ValueError):
    """No feasible point exists (e.g. a drift condition fails everywhere)."""
