"""Exception types shared across the package."""


class ProcoptError(Exception):
    """Base class for all package-specific errors."""


class OutOfBoundsError(ProcoptError, ValueError):
    """A coordinate lies outside the variable's allowed range."""

    def __init__(self, variable: str, value: float, lo: float, hi: float):
        self.variable = variable
        self.value = value
        super().__init__(
            f"value {value!r} for variable {variable!r} outside [{lo}, {hi}]"
        )


class UnknownUnitError(ProcoptError, ValueError):
    """No conversion is registered for the given unit pair."""


class SingularKernelError(ProcoptError, RuntimeError):
    """Cholesky factorization failed even after jitter escalation."""


class DegenerateDataError(ProcoptError, ValueError):
    """Training data cannot support a regression fit (e.g. one distinct input)."""


class InsufficientCandidatesError(ProcoptError, ValueError):
    """Fewer unsampled candidates than the requested batch size."""


class CannotAvoidDuplicatesError(ProcoptError, RuntimeError):
    """Grid too small (or too coarse) to place the requested distinct samples."""


class BudgetTooSmallError(ProcoptError, ValueError):
    """Evaluation budget below the method's minimum round size."""


class InsufficientWindowGridError(ProcoptError, ValueError):
    """Refinement window grid has fewer points than the requested batch."""


class InvalidConfigError(ProcoptError, ValueError):
    """Campaign configuration rejected at construction."""


class NotReadyError(ProcoptError, RuntimeError):
    """Campaign state machine does not allow the requested transition."""


class UnknownConditionError(ProcoptError, ValueError):
    """Result record references a condition that was never suggested."""


class MalformedRecordError(ProcoptError, ValueError):
    """A results row failed parsing or validation."""

    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class SchemaVersionMismatchError(ProcoptError, ValueError):
    """Snapshot document written by an incompatible schema version."""


class CorruptSnapshotError(ProcoptError, ValueError):
    """Snapshot document is unreadable or structurally invalid."""
