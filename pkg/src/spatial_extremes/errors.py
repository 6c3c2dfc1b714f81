"""Exception types raised across the package."""


class SpatialExtremesError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(SpatialExtremesError, ValueError):
    pass


class DomainError(SpatialExtremesError, ValueError):
    pass


class OutOfSupportError(DomainError):
    """Observation(s) outside the GEV support.

    ``cells`` holds the offending (site, year) indices when raised on panels.
    """

    def __init__(self, message, cells=None):
        super().__init__(message)
        self.cells = list(cells) if cells is not None else []


class NotPositiveDefiniteError(SpatialExtremesError, ValueError):
    pass


class NonFiniteDensityError(SpatialExtremesError, FloatingPointError):
    pass


class NonPositiveScaleError(SpatialExtremesError, ValueError):
    def __init__(self, message, site=None):
        super().__init__(message)
        self.site = site


class UnsupportedSpecError(SpatialExtremesError, TypeError):
    pass


class NoRootError(SpatialExtremesError, ValueError):
    def __init__(self, message, supremum=None):
        super().__init__(message)
        self.supremum = supremum


class InsufficientDataError(SpatialExtremesError, ValueError):
    pass


class AllStartsFailedError(SpatialExtremesError, RuntimeError):
    pass


class SingularHessianError(SpatialExtremesError, ArithmeticError):
    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class EmptyBallError(SpatialExtremesError, ValueError):
    pass


class ConfigError(SpatialExtremesError, ValueError):
    """User-facing configuration or input-file problem."""
