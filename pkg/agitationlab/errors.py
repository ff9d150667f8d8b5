"""
Exception hierarchy shared by every module.

Each error carries the process exit code the CLI reports for it.
"""


class AgitationLabError(Exception):
    """Base class for all errors raised by agitationlab"""
    exit_code = 2


class UsageError(AgitationLabError):
    """Bad arguments or an inconsistent configuration"""
    exit_code = 1


class DataError(AgitationLabError):
    """Input data violates a format or an invariant"""
    exit_code = 2


class NumericError(AgitationLabError):
    """A numerical procedure failed (divergence, non-finite values)"""
    exit_code = 3
