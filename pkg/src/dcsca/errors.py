"""Exception hierarchy shared by the solvers and the command-line harness."""


class DcscaError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameter(DcscaError, ValueError):
    """A scalar parameter is outside its admissible range."""


class InvalidArgument(DcscaError, ValueError):
    """Array shapes or lengths do not conform."""


class DegenerateCubic(DcscaError, ValueError):
    """Leading coefficient of a cubic is zero."""


class ConvergenceFailure(DcscaError, RuntimeError):
    """An iterative primitive hit its iteration cap.

    The best estimate reached so far is kept in ``best_estimate``.
    """

    def __init__(self, message, best_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate


class NotPositiveDefinite(DcscaError, ValueError):
    pass


class NumericalFailure(DcscaError, ArithmeticError):
    """A non-finite value showed up where a finite one is required."""


class LineSearchFailure(DcscaError, RuntimeError):
    """Backtracking exhausted its budget without sufficient decrease."""


class InvalidProblem(DcscaError, ValueError):
    """Problem data violates a structural invariant (e.g. a zero column)."""


class InvalidPartition(DcscaError, ValueError):
    pass


class InvalidReference(DcscaError, ValueError):
    pass


class InternalError(DcscaError, AssertionError):
    """A runtime invariant that should hold by construction was violated."""
