"""Exception hierarchy.

Each class carries the process exit code the CLI uses when it escapes a
command: 2 for usage problems, 3 for data problems, 4 for numeric ones.
"""


class DenoiseADError(Exception):
    exit_code = 1


class UsageError(DenoiseADError):
    exit_code = 2


class ConfigError(UsageError):
    pass


class ShapeError(DenoiseADError, ValueError):
    exit_code = 4


class DataError(DenoiseADError):
    exit_code = 3


class IngestionError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateDataError(DataError):
    pass


class EvaluationError(DataError):
    pass


class CompatibilityError(DataError):
    pass


class DeserializationError(DataError):
    pass


class ReportError(DataError):
    pass


class NumericError(DenoiseADError):
    exit_code = 4


class OracleError(NumericError):
    pass


class DivergenceError(NumericError):
    def __init__(self, epoch, message=None):
        super().__init__(message or f"non-finite loss at epoch {epoch}")
        self.epoch = epoch
