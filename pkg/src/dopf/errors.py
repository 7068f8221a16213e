"""Exception types shared across the package."""


class DopfError(Exception):
    """Base class for all package errors."""


class DimensionError(DopfError, ValueError):
    """Array shapes do not match the problem they are used with."""


class PoisonedEvaluationError(DopfError, FloatingPointError):
    """A callback returned NaN or Inf.

    Attributes
    ----------
    region : int or None
        Index of the region whose callback failed, if known.
    """

    def __init__(self, message, region=None):
        if region is not None:
            message = f"region {region}: {message}"
        super().__init__(message)
        self.region = region


class LocalSolveError(DopfError, RuntimeError):
    """A local subproblem could not be solved; carries the region index."""

    def __init__(self, message, region=None, result=None):
        if region is not None:
            message = f"region {region}: {message}"
        super().__init__(message)
        self.region = region
        self.result = result


class CoordinationError(DopfError, RuntimeError):
    """The coordination QP has a singular or inconsistent KKT system."""


class CaseFormatError(DopfError, ValueError):
    """Malformed case or partition file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedFeatureError(CaseFormatError):
    """Valid input that uses a feature outside the supported subset."""


class ModelBuildError(DopfError, ValueError):
    """The partition is incompatible with the network."""


class ConvergenceError(DopfError, RuntimeError):
    """An iterative procedure stopped without meeting its tolerance.

    Attributes
    ----------
    best : ndarray or None
        Best point found.
    residual : float
        Residual norm at ``best``.
    """

    def __init__(self, message, best=None, residual=float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.best = best
        self.residual = residual
