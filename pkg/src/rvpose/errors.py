"""Exception types raised across the library."""


class RvposeError(Exception):
    """Base class for all library errors."""


class NonPositiveDepth(RvposeError):
    """Camera-frame point has z <= 0 and cannot be projected."""


class InvalidDepth(RvposeError):
    """Depth value is non-positive or flagged invalid."""


class EmptyMesh(RvposeError):
    """Mesh has no triangles."""


class DimensionMismatch(RvposeError):
    """Images or arrays that must share dimensions do not."""


class UnknownObjectId(RvposeError):
    """Object id does not refer to a registered model."""


class OutOfGamutInput(RvposeError):
    """sRGB component outside [0, 1]."""


class TooFewPoints(RvposeError):
    """Cloud too small for the requested neighborhood size."""


class InvalidSpec(RvposeError):
    """Malformed primitive or scene specification."""


class NoValidDepth(RvposeError):
    """Detection mask contains no valid-depth pixel."""


class EmptyBatch(RvposeError):
    """Batch reduction invoked on an empty collection."""


class EmptyModel(RvposeError):
    """Model point set is empty."""


class EmptyInput(RvposeError):
    """Metric invoked on an empty error list."""


class ConfigError(RvposeError):
    """Invalid search or CLI configuration."""


class DatasetError(RvposeError):
    """Scene or model files missing or malformed."""
