"""Exception types raised across the package."""


class PVMError(Exception):
    """Base class for all package errors."""


class NotMeanZero(PVMError, ValueError):
    pass


class GridMismatch(PVMError, ValueError):
    pass


class NotCentered(PVMError, ValueError):
    pass


class ConstantsNotUnit(PVMError, ValueError):
    pass


class NonzeroMeanPV(PVMError, ValueError):
    pass


class BadPeriod(PVMError, ValueError):
    pass


class SignConditionViolated(PVMError, ValueError):
    pass


class ConfigInvalid(PVMError, ValueError):
    pass


class RadiiOutOfRange(PVMError, ValueError):
    pass


class UnknownFigure(PVMError, ValueError):
    pass


class PropertyViolated(PVMError, ValueError):
    """Raised when a tabulated F fails one or more of its structural conditions."""

    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__("F violates: " + ", ".join(self.failed))


class MaxIterExceeded(PVMError, RuntimeError):
    """The solver hit ``max_iter`` before its certificate dropped below tolerance.

    Carries the best iterate seen and its certified distance bound so callers
    can still use the partial result.
    """

    def __init__(self, best, gap, report=None):
        self.best = best
        self.gap = gap
        self.report = report
        super().__init__(f"max_iter reached; certified H1 distance bound {gap:.3e}")
