"""Exception hierarchy.

Each family maps onto one CLI exit code: validation problems exit 2,
numerical/computation problems exit 3, and I/O problems (``OSError``) exit 4.
"""


class MadpfiError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(MadpfiError, ValueError):
    exit_code = 2


class ParseError(ValidationError):
    """A snapshot record could not be parsed."""

    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


class SnapshotValidationError(ValidationError):
    pass


class EmptyCorpusError(ValidationError):
    pass


class InsufficientDepthError(ValidationError):
    pass


class NotEligibleError(ValidationError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ComputationError(MadpfiError):
    exit_code = 3


class DegenerateInputError(ComputationError):
    pass


class InsufficientDataError(ComputationError):
    pass


class RankDeficiencyError(ComputationError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)


class UnidentifiableModelError(ComputationError):
    pass


class ConvergenceError(ComputationError):
    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(message)


class EmptyJoinError(ComputationError):
    def __init__(self, message, unmatched=()):
        self.unmatched = list(unmatched)
        super().__init__(message)
