"""Exception hierarchy shared by all depthfuse modules."""


class DepthFuseError(Exception):
    """Base class for every error raised by this package."""


class InvalidDepthError(DepthFuseError, ValueError):
    pass


class BoundsError(DepthFuseError, ValueError):
    pass


class BehindCameraError(DepthFuseError, ValueError):
    pass


class ShapeError(DepthFuseError, ValueError):
    pass


class ConfigError(DepthFuseError, ValueError):
    pass


class InvalidVarianceError(DepthFuseError, ValueError):
    pass


class NoKeyframeError(DepthFuseError, LookupError):
    pass


class NoScaleError(DepthFuseError):
    pass


class EmptyInputError(DepthFuseError, ValueError):
    pass


class DataError(DepthFuseError):
    """Problem with on-disk input data. Surfaced verbatim by the CLI."""


class ParseError(DataError):
    pass


class FormatError(DataError):
    pass


class OrderingError(DataError):
    pass


class PoseLookupError(DataError, LookupError):
    pass
