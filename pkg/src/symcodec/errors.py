"""Exception hierarchy shared by every module."""


class SymCodecError(Exception):
    """Base class for all toolkit errors."""


class FormatError(SymCodecError):
    """Malformed, truncated or otherwise undecodable byte stream."""


class InvariantError(SymCodecError, ValueError):
    """A domain invariant was violated (even K, NaN weights, bad bit-width...)."""


class ShapeError(SymCodecError, ValueError):
    """Operands have incompatible shapes."""


class IoError(SymCodecError, OSError):
    """Filesystem failure while reading or writing a container."""
