"""Exception types raised by the edgeodom library."""


class EdgeOdomError(Exception):
    """Base class for all edgeodom errors."""


class MalformedFileError(EdgeOdomError, ValueError):
    """A dataset file does not match its declared binary/text layout."""


class InvalidIntervalError(EdgeOdomError, ValueError):
    """A [lo, hi] interval parameter has lo >= hi or is otherwise unusable."""


class InsufficientNeighborsError(EdgeOdomError, ValueError):
    """A windowed computation was requested at an index without a full window."""


class DegenerateGeometryError(EdgeOdomError, ValueError):
    """Input geometry carries no usable structure (zero scatter, coincident points)."""


class OutOfRangeError(EdgeOdomError, ValueError):
    """A scalar argument lies outside its documented domain."""


class EmptyMapError(EdgeOdomError, ValueError):
    """An operation that needs map content was called on an empty map."""


class LengthMismatchError(EdgeOdomError, ValueError):
    """Two sequences that must be index-matched have different lengths."""


class ConfigError(EdgeOdomError, ValueError):
    """A configuration file or override is invalid."""
