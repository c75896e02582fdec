"""Exceptions raised by pts-track.

Every error derives from :class:`PtsTrackError` and from the builtin exception
closest in meaning, so ``except ValueError`` style handlers keep working.
"""

__all__ = [
    "PtsTrackError",
    "GeometryError",
    "DegenerateConfigurationError",
    "NoConsensusError",
    "PointAtInfinityError",
    "SingularMatrixError",
    "NonPositiveExtentError",
    "BoxOutOfBoundsError",
    "EmptyMaskError",
    "SingularInnovationError",
    "ZeroVarianceTemplateError",
    "TemplateLargerThanPatchError",
    "NotInitializedError",
    "LengthMismatchError",
    "ParseError",
    "ConfigError",
    "IoError",
    "UnsupportedFormatError",
    "SpecError",
]


class PtsTrackError(Exception):
    """Base class of all pts-track errors."""


class GeometryError(PtsTrackError, ValueError):
    """Base class of the errors a tracking step can degrade into a failed frame."""


class DegenerateConfigurationError(GeometryError):
    """Too few or collinear/coincident correspondences to fit a homography."""


class NoConsensusError(GeometryError):
    """RANSAC could not find a hypothesis supported by enough inliers."""


class PointAtInfinityError(GeometryError):
    """A point is mapped to (or too close to) the line at infinity."""


class SingularMatrixError(GeometryError):
    """A homography that needs inverting is singular."""


class NonPositiveExtentError(GeometryError):
    """A width, height or scale factor that must be positive is not."""


class BoxOutOfBoundsError(GeometryError):
    """An initialization box is degenerate or does not intersect the frame."""


class EmptyMaskError(PtsTrackError, ValueError):
    """An operation needs at least one foreground pixel."""


class SingularInnovationError(PtsTrackError, ValueError):
    """The Kalman innovation covariance cannot be inverted."""


class ZeroVarianceTemplateError(PtsTrackError, ValueError):
    """A template has constant intensity, so NCC is undefined."""


class TemplateLargerThanPatchError(PtsTrackError, ValueError):
    """The template does not fit inside the search patch."""


class NotInitializedError(PtsTrackError, RuntimeError):
    """A tracking session was stepped before being initialized."""


class LengthMismatchError(PtsTrackError, ValueError):
    """Per-frame inputs are not aligned."""


class ParseError(PtsTrackError, ValueError):
    """A text record could not be parsed."""


class ConfigError(PtsTrackError, ValueError):
    """Invalid configuration file. The message names the offending key path."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class IoError(PtsTrackError, OSError):
    """A file could not be read or is truncated."""


class UnsupportedFormatError(PtsTrackError, ValueError):
    """A file is not in one of the supported formats."""


class SpecError(PtsTrackError, ValueError):
    """A synthetic scenario description is invalid."""
