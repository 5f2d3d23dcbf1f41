"""Exception types raised across the package."""


class LenglartError(Exception):
    """Base class for all package errors."""


class NonMonotoneTimes(LenglartError, ValueError):
    pass


class InconsistentLeftLimit(LenglartError, ValueError):
    pass


class BadHorizon(LenglartError, ValueError):
    pass


class ZeroDensity(LenglartError, ArithmeticError):
    """A density value at or below the floor was used as a divisor."""


class ModeMismatch(LenglartError, ValueError):
    pass


class NotApplicable(LenglartError):
    """The classical Girsanov form does not apply to this scenario."""


class MissingLocalization(LenglartError, ValueError):
    pass


class ZeroCell(LenglartError, ZeroDivisionError):
    pass


class DegenerateSE(LenglartError, ArithmeticError):
    pass


class ConfigError(LenglartError, ValueError):
    pass


class CheckFailure(LenglartError):
    pass
