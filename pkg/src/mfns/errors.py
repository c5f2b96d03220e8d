"""Exception types shared across the package."""


class MFNSError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MFNSError, ValueError):
    """Invalid parameters, truncations, or command-line input."""


class DataError(MFNSError, ValueError):
    """Malformed input data: non-finite samples, corrupt snapshot files."""


class ConsistencyError(MFNSError, RuntimeError):
    """An internal invariant was violated (e.g. Hermitian symmetry lost)."""


class BlowUpError(MFNSError, RuntimeError):
    """A trajectory produced non-finite coefficients."""

    def __init__(self, message, t=None, particle=None):
        super().__init__(message)
        self.t = t
        self.particle = particle
