"""Exception hierarchy shared by all weaktext modules.

Each class carries the process exit code the CLI maps it to.
"""


class WeakTextError(Exception):
    exit_code = 2


class ConfigError(WeakTextError, ValueError):
    """Invalid parameter or configuration value."""

    exit_code = 1


class DataError(WeakTextError):
    """Unreadable, malformed or inconsistent input data."""

    exit_code = 2


class RegistryMismatch(DataError):
    """Model LF registry does not match the configured LF list."""


class NumericalError(WeakTextError, ArithmeticError):
    """Non-finite objective or gradient during training."""

    exit_code = 3
