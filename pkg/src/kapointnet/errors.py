"""Exception hierarchy shared by all kapointnet modules."""


class KaPointNetError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(KaPointNetError, ValueError):
    """Tensor extents do not line up for the requested operation."""


class UsageError(KaPointNetError, RuntimeError):
    """An API was called outside its contract (wrong mode, consumed graph...)."""


class ConfigError(KaPointNetError, ValueError):
    """A model, training or run configuration is invalid."""


class DegenerateRangeError(KaPointNetError, ValueError):
    """Min/max scaling was asked to map a constant variable."""


class DataError(KaPointNetError, ValueError):
    """Point-cloud data violates an invariant (duplicates, too few points...)."""


class UnsupportedModeError(KaPointNetError, ValueError):
    """The operation is not available for this model configuration."""


class NonFiniteError(KaPointNetError, FloatingPointError):
    """NaN or Inf detected where finite values are required."""


class VersionMismatchError(KaPointNetError, ValueError):
    """A file was written with an incompatible format or schema version."""

    def __init__(self, what, found, supported):
        super().__init__(f"{what} version {found} is not supported (supported: {supported})")
        self.found = found
        self.supported = supported


class UndefinedMetricError(KaPointNetError, ValueError):
    """A metric is undefined for the input (zero-norm truth, empty set)."""


class GeometryError(KaPointNetError, ValueError):
    """A surface polygon is unusable (too few points, self-intersecting)."""
