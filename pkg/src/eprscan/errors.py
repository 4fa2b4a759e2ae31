"""Exception hierarchy shared by all eprscan modules."""


class EprScanError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(EprScanError, ValueError):
    """A physical or numerical parameter is out of its valid range."""


class ModeError(EprScanError, ValueError):
    """A lens configuration or dataset is in the wrong basis for the call."""


class ResolutionError(EprScanError):
    """A discretization is too coarse for the requested accuracy."""


class SimulationError(EprScanError):
    """Expected rates could not be computed at some grid point."""


class SizeError(EprScanError):
    """A request would allocate more memory than the guard allows."""


class OrderingError(EprScanError, ValueError):
    """A time-tag stream is not sorted."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NormalizationError(EprScanError, ZeroDivisionError):
    """Coincidences cannot be normalized because a singles count is zero."""


class FitError(EprScanError):
    """A Gaussian fit failed; ``reason`` is a short machine-readable tag."""

    def __init__(self, message, reason="failed"):
        super().__init__(message)
        self.reason = reason


class InsufficientDataError(EprScanError):
    """Too few usable slices to form an inferred variance."""


class InputError(EprScanError, ValueError):
    """Malformed input data or files."""
