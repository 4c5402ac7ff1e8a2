"""Exception hierarchy shared by every stage of the inference pipeline."""


class PTLSIError(Exception):
    """Base class for all errors raised by :mod:`ptlsi`."""


class ValidationError(PTLSIError, ValueError):
    """Malformed user input: shapes, signs, missing values."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SingularSelectionError(PTLSIError):
    """A Gram matrix on a selected or active set is numerically singular."""


class ConvergenceError(PTLSIError):
    """The L1 solver hit ``max_iter`` before meeting its KKT tolerance."""

    def __init__(self, message, kkt_residual=float("nan"), iterations=0):
        super().__init__(message)
        self.kkt_residual = kkt_residual
        self.iterations = iterations


class NumericDegeneracyError(PTLSIError):
    """A probability or variance underflowed to a value that cannot be trusted."""


class InconsistencyError(PTLSIError):
    """The KKT characterization disagrees with the solver at a query point."""


class StallError(PTLSIError):
    """The line sweep stopped making progress."""
