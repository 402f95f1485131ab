"""Exception classes shared across the package."""


class DeinterlaceError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(DeinterlaceError, ValueError):
    """Tensor/array shapes are inconsistent with an operation's contract."""


class ParityError(DeinterlaceError, ValueError):
    """Field parities violate the odd/even alternation contract."""


class FormatError(DeinterlaceError, ValueError):
    """A serialized file (weights, flow, image) is malformed."""


class ConfigError(DeinterlaceError, ValueError):
    """A model or training configuration is internally inconsistent."""


class NumericalError(DeinterlaceError, RuntimeError):
    """A non-finite value appeared where finite values are required."""
