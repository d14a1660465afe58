"""Exception hierarchy shared by all modules."""


class ConflapError(Exception):
    """Base class for every error raised by the package."""


class InvalidLatticeError(ConflapError):
    pass


class CoefficientMismatchError(ConflapError):
    pass


class DimensionMismatchError(ConflapError):
    pass


class TruncationError(ConflapError):
    """Raised when a request reaches past the certified part of a truncated spectrum."""


class InvalidMetricError(ConflapError):
    pass


class InvalidConformalFactorError(ConflapError):
    pass


class UnsupportedDimensionError(ConflapError):
    pass


class GridMismatchError(ConflapError):
    pass


class CoefficientError(ConflapError):
    """The operator coefficient c is outside the range an identity requires."""


class ZeroVectorError(ConflapError):
    pass


class SolverError(ConflapError):
    """Iterative eigensolver failed to converge; carries the best residuals seen."""

    def __init__(self, message, eigenvalues=None, residuals=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.residuals = residuals


class ScalBelowS0Error(ConflapError):
    pass


class RayleighExceedsError(ConflapError):
    pass


class DisconnectedError(ConflapError):
    pass


class InvalidProfileError(ConflapError):
    pass


class SingularProfileError(ConflapError):
    pass


class GeometryRangeError(ConflapError):
    pass


class RangeError(ConflapError):
    """Integer parameter outside its supported range."""


class NormalizationError(ConflapError):
    pass


class InconsistentFlagsError(ConflapError):
    pass


class InexactKappaError(ConflapError):
    pass
