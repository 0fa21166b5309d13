class RcmError(Exception):
    """Base class for all package errors."""


class ParameterError(RcmError, ValueError):
    pass


class RangeError(RcmError, IndexError):
    pass


class UnsupportedOperationError(RcmError):
    pass


class SizeError(RcmError):
    """A computation exceeds a configured size budget."""

    def __init__(self, message: str, budget_name: str = "", budget: int = 0):
        super().__init__(message)
        self.budget_name = budget_name
        self.budget = budget


class SolverError(RcmError):
    pass


class InsufficientPathError(RcmError):
    pass


class MergeError(RcmError):
    pass


class ConfigError(RcmError):
    pass
