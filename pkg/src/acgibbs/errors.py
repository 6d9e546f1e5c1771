"""Exception hierarchy shared across modules."""


class AcGibbsError(Exception):
    """Base class for all package errors."""


class ConfigError(AcGibbsError, ValueError):
    """Invalid configuration or malformed specification."""


class DomainError(AcGibbsError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InvalidPotentialError(AcGibbsError, ValueError):
    """Potential produced non-finite values or violates its contract."""


class PrecisionError(AcGibbsError, ArithmeticError):
    """Quadrature or iterative routine failed to reach the requested accuracy."""


class NumericalError(AcGibbsError, ArithmeticError):
    """Non-finite intermediate result in a numerical routine."""


class BudgetError(AcGibbsError, MemoryError):
    """Product-space or memory budget exceeded."""


class IntegrityError(AcGibbsError, IOError):
    """Persisted data is truncated, corrupted or has an unknown format."""


class MigrationError(IntegrityError):
    """Persisted data has a known magic but an unsupported format version."""


class ContractViolation(AcGibbsError, AssertionError):
    """Caller broke an operation's precondition."""
