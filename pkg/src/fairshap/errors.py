"""Exception hierarchy. Every error carries the CLI exit code it maps to."""


class AuditError(Exception):
    """Base class for all errors raised by fairshap."""

    exit_code = 1


class ConfigError(AuditError):
    """Invalid or unreadable configuration."""

    exit_code = 3


class DataError(AuditError):
    """Problems reading, encoding or splitting a dataset."""

    exit_code = 4


class ReweighError(AuditError):
    """Reweighing weights are undefined for the given data."""

    exit_code = 5


class ModelError(AuditError):
    """Training or prediction failure, or a malformed model document."""

    exit_code = 6


class ExplainError(AuditError):
    """Shapley explanation failure."""

    exit_code = 7


class MetricError(AuditError):
    """A fairness or importance measure is undefined for the given data."""

    exit_code = 8


class UndefinedGroupError(MetricError):
    """One of the two sensitive groups is empty.

    ``partial`` holds whatever could still be computed (for importance
    summaries, the global impact and ranks).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class StageError(AuditError):
    """An error raised inside a named pipeline stage.

    Wraps the original error and keeps its exit code.
    """

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
