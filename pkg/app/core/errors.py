"""
Error types for the Dose-Response Analysis System
Every error carries the exit code the CLI reports for it
"""

from typing import Optional


class DoseResponseError(Exception):
    """Base error; exit_code is the stable CLI contract"""

    exit_code: int = 1

    def to_dict(self) -> dict:
        return {'error': str(self), 'kind': type(self).__name__, 'exit_code': self.exit_code}


class UsageError(DoseResponseError):
    """Bad arguments or configuration documents"""
    exit_code = 1


class UnsupportedModelError(DoseResponseError):
    """Model kind not available for the requested operation"""
    exit_code = 1


class UnsupportedPriorError(DoseResponseError):
    """Prior family the engine cannot sample under"""
    exit_code = 1


class NumericalError(DoseResponseError):
    """Non-finite values handed to a numerical kernel"""
    exit_code = 1


class DataValidationError(DoseResponseError):
    """Trial data that breaks a record invariant"""
    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDatasetError(DataValidationError):
    """CSV with a header but no records"""


class GridBoundsError(DoseResponseError):
    """Grid bounds that miss the posterior mass"""
    exit_code = 2


class ConvergenceError(DoseResponseError):
    """Sampling finished but failed the convergence gate"""
    exit_code = 3

    def __init__(self, message: str, failing: Optional[list] = None):
        self.failing = failing or []
        super().__init__(message)


class InitializationError(DoseResponseError):
    """No finite starting point found for a chain"""
    exit_code = 4


class StageError(DoseResponseError):
    """Failure a pipeline stage reported as a result dict"""

    def __init__(self, message: str, exit_code: int = 1):
        self.exit_code = exit_code
        super().__init__(message)

    @classmethod
    def from_result(cls, result: dict) -> 'StageError':
        return cls(result.get('error', 'unknown failure'), result.get('exit_code', 1))
