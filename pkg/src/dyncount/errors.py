"""Exception types shared across the package.

The CLI maps each class to an exit code, so library code raises the most
specific one that applies.
"""


class DyncountError(Exception):
    """Base class for all package errors."""


class DataError(DyncountError, ValueError):
    """Malformed or inconsistent input data (bad stream file, self-loop, ...)."""


class FeasibilityError(DyncountError):
    """A requested computation exceeds a configured limit or budget."""


class BudgetError(DyncountError, ValueError):
    """An invalid privacy budget."""
