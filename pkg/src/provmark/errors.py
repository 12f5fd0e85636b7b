"""Exception hierarchy shared across provmark modules."""


class ProvmarkError(Exception):
    """Base class for every error raised by provmark."""


class MalformedFile(ProvmarkError):
    """An image file could not be decoded."""


class UnsupportedFormat(ProvmarkError):
    """A decodable file is not PNG or baseline JPEG."""


class DimensionMismatch(ProvmarkError, ValueError):
    pass


class LengthMismatch(ProvmarkError, ValueError):
    pass


class ImageTooSmall(ProvmarkError, ValueError):
    pass


class NotWatermarkable(ProvmarkError):
    """Content rejected by the corner-case filter."""


class CodeLengthMismatch(ProvmarkError, ValueError):
    pass


class NoStrength(ProvmarkError, ValueError):
    """Transform has no strength parameter to sample."""


class InsufficientNegatives(ProvmarkError, ValueError):
    pass


class EmptyScores(ProvmarkError, ValueError):
    pass


class EmptyCalibration(ProvmarkError, ValueError):
    pass


class InvalidPValue(ProvmarkError, ValueError):
    pass


class EmptyRegistry(ProvmarkError, ValueError):
    pass


class CapacityExhausted(ProvmarkError):
    pass


class DistanceViolation(ProvmarkError):
    pass


class DatasetEmpty(ProvmarkError):
    pass


class CorruptFile(ProvmarkError, ValueError):
    """A JSON artifact (key, calibration, registry) failed validation."""
