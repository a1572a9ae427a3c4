"""Exception types raised across the package."""


class IsoQuantError(Exception):
    """Base class for every error raised by :mod:`isoquant`."""


class DegenerateInput(IsoQuantError, ValueError):
    pass


class NonUnitRotor(IsoQuantError, ValueError):
    pass


class UnsupportedDim(IsoQuantError, ValueError):
    pass


class ShapeMismatch(IsoQuantError, ValueError):
    pass


class NonFinite(IsoQuantError, ValueError):
    pass


class SchemeMismatch(IsoQuantError, ValueError):
    pass


class InsufficientData(IsoQuantError, ValueError):
    pass


class DegenerateCell(IsoQuantError, RuntimeError):
    """A Lloyd cell emptied and could not be repaired by splitting."""


class CodeOutOfRange(IsoQuantError, ValueError):
    pass


class OutOfSupport(IsoQuantError, ValueError):
    pass


class BadCovariance(IsoQuantError, ValueError):
    pass


class ConfigError(IsoQuantError, ValueError):
    pass


class FormatError(IsoQuantError, ValueError):
    """A serialized scheme, codebook or batch file could not be parsed."""
