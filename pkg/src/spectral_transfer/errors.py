"""Exception types raised across the package."""


class SpectralTransferError(Exception):
    """Base class for errors raised by this package."""


class GraphError(SpectralTransferError, ValueError):
    """Malformed graph, partition or signal input."""


class SingularityError(SpectralTransferError, ValueError):
    """A point lies on (or numerically at) the spectrum of an operator."""


class NormalityError(SpectralTransferError, ValueError):
    """An operation that needs a normal operator received a non-normal one."""


class SpectrumError(SpectralTransferError, ArithmeticError):
    """The eigensolver failed to converge."""


class FilterContextError(SpectralTransferError, ValueError):
    """A filter variant was paired with an incompatible bound context."""
