"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""


class TrendvolError(Exception):
    exit_code = 1


class DataError(TrendvolError, ValueError):
    """Malformed, inconsistent or insufficient input data."""

    exit_code = 2


class InfeasibleSchemeError(TrendvolError):
    exit_code = 3


class TrainingError(TrendvolError):
    """Training diverged; ``last_finite_epoch`` is the last epoch with finite loss."""

    exit_code = 4

    def __init__(self, message, last_finite_epoch=None):
        super().__init__(message)
        self.last_finite_epoch = last_finite_epoch


class ConvergenceError(TrainingError):
    pass


class EvaluationMismatch(TrendvolError):
    exit_code = 5


class UsageError(TrendvolError):
    exit_code = 64
