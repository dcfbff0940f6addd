"""Exception types raised across the package."""


class SelfNormError(Exception):
    """Base class for every error raised by selfnorm."""


class DegenerateDenominator(SelfNormError, ZeroDivisionError):
    """A normalizing sum of squares is zero."""


class InvalidThreshold(SelfNormError, ValueError):
    pass


class AllTrimmed(SelfNormError, ValueError):
    """Every observation fell outside the trimming threshold."""


class DomainError(SelfNormError, ValueError):
    pass


class StandardizationError(SelfNormError, ValueError):
    """An analytic moment profile is not standardized to unit variance."""


class QuadratureFailure(SelfNormError, RuntimeError):
    pass


class DegenerateScheme(SelfNormError, ValueError):
    """A block scheme would contain fewer than two blocks."""


class UnsupportedProcess(SelfNormError, ValueError):
    pass


class InvalidSpec(SelfNormError, ValueError):
    pass


class MomentNotFinite(SelfNormError, ValueError):
    pass


class GridMismatch(SelfNormError, ValueError):
    pass


class TooLarge(SelfNormError, ValueError):
    """An exact enumeration would visit too many outcomes."""


class QuantileTooLarge(SelfNormError, ValueError):
    """The calibration equation for t0 has no solution at this sample size."""


class DegenerateCoordinate(SelfNormError, ValueError):
    def __init__(self, rows):
        self.rows = list(rows)
        super().__init__(f"winsorized values are constant in coordinate(s) {self.rows}")
