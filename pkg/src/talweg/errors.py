"""Exception hierarchy shared across the package."""


class TalwegError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(TalwegError, ValueError):
    """Invalid field name, parameters or experiment configuration."""


class EvaluationError(TalwegError, ArithmeticError):
    """A field returned a non-finite value.

    Attributes
    ----------
    point : ndarray
        The coordinates at which evaluation failed.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class CriticalPointError(TalwegError):
    """Gradient vanishes where it must not, or fails to vanish at x*."""


class SpectralError(TalwegError):
    pass


class DegenerateSpectrumError(SpectralError):
    """Two Hessian eigenvalues are closer than the simplicity tolerance.

    ``pair`` holds the 1-based indices of the colliding eigenvalues.
    """

    def __init__(self, message, pair=None, index=None):
        super().__init__(message)
        self.pair = pair
        self.index = index


class DegenerateConfigError(ConfigError, DegenerateSpectrumError):
    """A builtin was asked for a repeated spectrum."""


class TrackingError(SpectralError):
    """Consecutive eigenframes are too far apart to be matched continuously."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(TalwegError):
    """Newton or Gauss-Newton iteration failed to converge."""


class LevelTooSmallError(TalwegError):
    """Talweg branches collided: the requested level is numerically at r*."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


class ScanError(TalwegError):
    """Branch chaining across levels was ambiguous."""


class ExperimentError(TalwegError):
    """A Monte Carlo experiment excluded too many samples."""
