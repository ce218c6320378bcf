"""Exception hierarchy.

The CLI maps these onto exit codes: hypothesis-type failures exit 2,
nonconvergence exits 3, anything in ``UsageError`` exits 1.
"""


class NlelastError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(NlelastError, ValueError):
    pass


class UsageError(NlelastError):
    pass


class UnsupportedKernelError(NlelastError):
    pass


class HypothesisError(NlelastError):
    """A well-posedness hypothesis failed numerically."""


class ConditionViolatedError(HypothesisError):
    def __init__(self, message, probe=None):
        super().__init__(message)
        self.probe = probe


class HypothesisViolatedError(HypothesisError):
    pass


class CoercivityViolationError(HypothesisError):
    pass


class InequalityViolationError(HypothesisError):
    def __init__(self, message, field_id=None):
        super().__init__(message)
        self.field_id = field_id


class NearDegenerateSymbolError(HypothesisError):
    def __init__(self, message, xi=None):
        super().__init__(message)
        self.xi = xi


class InvalidCutoffError(NlelastError, ValueError):
    pass


class SingularFrequencyError(InvalidArgumentError):
    pass


class MemoryGuardError(NlelastError):
    pass


class NonconvergenceError(NlelastError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
