"""Exception hierarchy shared by every module."""


class RenewalLabError(Exception):
    """Base class for all laboratory errors."""


class ValidationFailure(RenewalLabError, ValueError):
    """An input failed validation. Carries the dotted path of the offending field."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path
        self.message = message


class BudgetExceeded(RenewalLabError):
    """A numerical ledger or memory budget was breached."""

    def __init__(self, ledger: str, value: float, budget: float):
        super().__init__(f"{ledger} ledger at {value:.3e} exceeds budget {budget:.3e}")
        self.ledger = ledger
        self.value = value
        self.budget = budget


class OutOfSupport(RenewalLabError):
    """F̄(x) = 0: the point lies beyond every stored mass and tail model."""


class NotApplicable(RenewalLabError):
    """The requested criterion does not apply in this parameter regime."""


class QuadratureFailure(RenewalLabError):
    """Adaptive quadrature returned a non-finite value."""
