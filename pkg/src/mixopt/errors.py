"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument violates a documented precondition."""


class SchemaError(DomainError):
    """A persisted file has a missing, unknown, or inconsistent schema."""


class TrainingError(RuntimeError):
    """Optimization produced a non-finite state.

    ``step`` is the optimizer step at which the problem was detected.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class BudgetError(DomainError):
    """A requested exhaustive computation exceeds the configured budget."""
