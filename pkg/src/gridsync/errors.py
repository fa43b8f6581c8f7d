"""Error categories shared by all modules.

Each error carries a short machine-readable ``category`` so the command line
driver can map it onto an exit code.
"""


class GridSyncError(Exception):
    """Base class for all toolkit errors."""

    category = "error"


class ValidationError(GridSyncError, ValueError):
    """Input data is malformed or physically inadmissible."""

    category = "validation"


class SingularMatrixError(GridSyncError, ArithmeticError):
    """A matrix that must be inverted is singular or numerically so."""

    category = "singular"


class NumericalError(GridSyncError, ArithmeticError):
    """A computation produced non-finite values (e.g. integration blow-up)."""

    category = "numerical"
