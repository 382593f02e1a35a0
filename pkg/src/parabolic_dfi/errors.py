"""Exception hierarchy shared by all modules."""


class DfiError(Exception):
    """Base class for all errors raised by this package."""


class GridError(DfiError):
    """Inconsistent grid geometry or out-of-range grid index."""


class ShapeError(DfiError):
    """Array shapes disagree with the grid they are attached to."""


class CapabilityError(DfiError):
    """The requested operation is not supported for this input variant or size."""


class ConditioningError(DfiError):
    """Numeric breakdown inside the simplex method (pivot too small)."""


class InfeasibleError(DfiError):
    """A set or optimization problem has no feasible point."""


class UnboundedError(DfiError):
    """A supremum is +infinity where a finite maximizer was required."""


class FeasibilityError(DfiError):
    """A control or velocity selection violates its admissible set.

    ``point`` holds the first offending grid index ``(ix, iy, it)``.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class PreconditionError(DfiError):
    """An operation was called on inputs violating its documented precondition."""


class ParseError(DfiError):
    """Malformed problem file or CSV table."""
