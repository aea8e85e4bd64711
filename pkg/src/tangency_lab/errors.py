"""Exception hierarchy shared by all modules."""


class LabError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(LabError, ValueError):
    """Parameters violate a type invariant or an operation precondition."""


class DomainError(LabError):
    """A point left the chart where a map is defined.

    ``stage`` names the step of a composition where the escape happened.
    """

    def __init__(self, message: str, stage: str | None = None, index: int | None = None):
        super().__init__(message)
        self.stage = stage
        self.index = index


class OverflowGuardError(LabError, OverflowError):
    """An iterate would exceed the double-precision range."""


class NonIsolatedError(LabError):
    """Fixed points are not isolated (non square-free iterate, identity map)."""


class BudgetError(LabError):
    """An exact computation would exceed its configured size budget."""


class ConvergenceError(LabError):
    """An iterative solver failed; ``best`` holds the best state reached."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class SchemaError(LabError, KeyError):
    """Configuration keys are missing, unknown or malformed."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "schema error"


class CertificateError(LabError):
    """A computed object failed its nondegeneracy certificate."""
