"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage errors exit 1, DataError
exits 2, NumericalError exits 3.
"""


class PpnmmError(Exception):
    """Base class for all package errors."""


class DataError(PpnmmError):
    """Malformed or inconsistent input data (files, shapes, configs)."""


class NumericalError(PpnmmError):
    """A numerical procedure failed (budget exhausted, degeneracy, ...)."""


class MatrixFileError(DataError):
    """Matrix file I/O failure carrying a machine-readable error code."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class ConfigError(DataError):
    """Config file parse failure located at a line number."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line
