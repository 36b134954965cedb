class SbamError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SbamError, ValueError):
    pass


class ParameterError(SbamError, ValueError):
    pass


class ConfigError(ParameterError):
    pass


class EmptyMaskError(SbamError, ValueError):
    """Raised when a loss is requested over a mask with no masked tokens."""


class DegenerateSweepError(SbamError, ValueError):
    """Raised when all performances in a sweep are equal."""


class FormatError(SbamError, ValueError):
    pass
