"""Exception hierarchy shared by the library and the CLI."""


class CslsError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ModelError(CslsError, ValueError):
    """Malformed input data: dimensions, labels, file contents."""

    exit_code = 4


class WalkBudgetError(CslsError):
    """Walk enumeration would exceed the configured cap."""

    exit_code = 4


class NonAffineError(CslsError, TypeError):
    """An operation would introduce a product of two decision variables."""

    exit_code = 4


class InfeasibleError(CslsError):
    """The requested LMI problem has no certified solution."""

    exit_code = 2


class SolverError(CslsError):
    """The SDP solver failed numerically or returned garbage."""

    exit_code = 5


class RecoveryError(CslsError):
    """Controller gains could not be recovered from a certificate."""

    exit_code = 5
