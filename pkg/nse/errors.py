"""Exception hierarchy shared by the library, the agents and the CLI.

Every error carries the process exit code the CLI should use when it escapes
to the top level: 2 for validation problems, 3 for numeric failures and 4 for
failed acceptance checks.
"""


class NSEError(Exception):
    exit_code = 1


# --- validation (exit code 2) ---

class ParameterDomainError(NSEError, ValueError):
    exit_code = 2


class SupportError(NSEError, ValueError):
    """A data point lies outside the support of the distribution."""
    exit_code = 2

    def __init__(self, message: str, index: int | None = None, value: float | None = None):
        super().__init__(message)
        self.index = index
        self.value = value


class DataError(NSEError, ValueError):
    exit_code = 2

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class EmptyIndexSetError(NSEError, ValueError):
    exit_code = 2


class RangeError(NSEError, ValueError):
    exit_code = 2


class LengthError(NSEError, ValueError):
    exit_code = 2


class ThresholdError(NSEError, ValueError):
    exit_code = 2

    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


class SingularDesignError(NSEError, ValueError):
    exit_code = 2


class ConfigurationError(NSEError, ValueError):
    exit_code = 2


# --- numeric failures (exit code 3) ---

class NumericFailureError(NSEError, ArithmeticError):
    exit_code = 3

    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


class NonConvergenceError(NSEError, RuntimeError):
    """No optimizer start produced a finite objective. `best` holds whatever was found."""
    exit_code = 3

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class QualityError(NSEError, RuntimeError):
    exit_code = 3

    def __init__(self, message: str, dropped: int, total: int):
        super().__init__(message)
        self.dropped = dropped
        self.total = total


class DegenerateSampleError(NSEError, ArithmeticError):
    exit_code = 3


class InvariantViolation(NSEError, AssertionError):
    exit_code = 3


# --- acceptance (exit code 4) ---

class AcceptanceFailure(NSEError):
    exit_code = 4

    def __init__(self, message: str, failed_checks: list[str] | None = None):
        super().__init__(message)
        self.failed_checks = failed_checks or []
