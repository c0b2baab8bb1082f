"""Exception types shared across the package."""


class OsirisError(Exception):
    """Base class for all package errors."""


class InvalidParameter(OsirisError, ValueError):
    pass


class ConfigError(OsirisError, ValueError):
    pass


class ShapeError(OsirisError, ValueError):
    pass


class FormatError(OsirisError, ValueError):
    """Raised when a dataset, checkpoint or wire frame cannot be decoded."""


class StratificationError(OsirisError, ValueError):
    pass
