"""Exception types raised across the toolkit.

All of them derive from ``ValueError`` so callers that only care about
"bad input" can catch that.
"""


class ShapeError(ValueError):
    """Array dimensions do not agree."""


class ValueRangeError(ValueError):
    """Pixel values outside the allowed range or not finite."""


class SingularIlluminantError(ValueError):
    """An illuminant channel is too close to zero to divide by."""

    def __init__(self, message, pixel=None):
        super().__init__(message)
        self.pixel = pixel


class EmptyDomainError(ValueError):
    """No valid samples remain to aggregate over."""


class UndefinedDirectionError(ValueError):
    """A zero vector has no direction (angular error undefined)."""


class DegenerateClusteringError(ValueError):
    """Too few gray candidates for the requested number of clusters."""


class InsufficientRegionError(ValueError):
    """A labelled region holds fewer pixels than the requested seed count."""


class FormatError(ValueError):
    """A file does not match its documented layout."""

    def __init__(self, message, pixel=None):
        super().__init__(message)
        self.pixel = pixel


class ConfigurationError(ValueError):
    """Inconsistent run or estimator parameters."""
