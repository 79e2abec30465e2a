"""
Error types for the THERGM toolkit.

Library code raises these; the command-line application maps each family
to a process exit code.
"""


class ThergmError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(ThergmError, ValueError):
    """Invalid or unreadable run configuration."""

    exit_code = 2


class DataError(ThergmError, ValueError):
    """Malformed input data, dimension mismatches, or unusable data for a model."""

    exit_code = 3


class ClusterTooSmallError(DataError):
    """A cluster never has enough remaining nodes to fit its TERGM."""

    def __init__(self, cluster: int, message: str = ""):
        self.cluster = cluster
        super().__init__(message or f"cluster {cluster} too small to fit")


class NumericalError(ThergmError, ArithmeticError):
    """Non-finite likelihoods or failed numerical solves."""

    exit_code = 4

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
