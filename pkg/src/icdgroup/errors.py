"""Exception hierarchy shared by every stage of the pipeline."""


class IcdGroupError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class DataError(IcdGroupError):
    """Malformed or missing input data (files, columns, codes, rows)."""

    exit_code = 2


class SchemaError(DataError):
    """A required column is missing from a CSV header."""


class MalformedCodeError(DataError):
    """An ICD9 code that does not match the numeric, V or E pattern."""


class EmptyResultError(DataError):
    """An operation produced nothing to work with (empty cohort, vocabulary...)."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given labels (e.g. a single class)."""


class NumericError(IcdGroupError):
    """Training produced a non-finite loss or parameters."""

    exit_code = 3


class PipelineError(IcdGroupError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
