"""Point-cloud sample and geometry metadata."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..errors import ConfigError, DataError

FIELD_NAMES = ("u", "v", "p")
GEOMETRY_KINDS = ("circle", "ellipse")


@dataclass(frozen=True)
class GeometryMeta:
    """Body shape plus the physical constants of the flow around it.

    ``params`` holds ``radius`` for circles and ``semi_major``, ``semi_minor``
    and ``orientation`` (radians, counterclockwise from +x) for ellipses.
    """

    kind: str
    params: dict = field(default_factory=dict)
    center: tuple[float, float] = (0.0, 0.0)
    rho: float = 1.0
    u_inf: float = 1.0
    mu: float = 0.025
    p0: float = 0.0

    def __post_init__(self):
        if self.kind not in GEOMETRY_KINDS:
            raise ConfigError(f"kind: expected one of {GEOMETRY_KINDS}, got {self.kind!r}")
        required = {"circle": ("radius",), "ellipse": ("semi_major", "semi_minor", "orientation")}[self.kind]
        for key in required:
            if key not in self.params:
                raise ConfigError(f"{key}: missing for {self.kind} geometry")
            if not np.isfinite(self.params[key]):
                raise ConfigError(f"{key}: must be finite, got {self.params[key]!r}")
        for key in required:
            if key != "orientation" and not self.params[key] > 0:
                raise ConfigError(f"{key}: must be positive, got {self.params[key]!r}")
        for name in ("rho", "u_inf", "mu"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive, got {getattr(self, name)!r}")
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def characteristic_length(self) -> float:
        if self.kind == "circle":
            return self.params["radius"]
        return min(self.params["semi_major"], self.params["semi_minor"])

    @property
    def reynolds(self) -> float:
        """Metadata only: rho * L * u_inf / mu."""
        return self.rho * self.characteristic_length * self.u_inf / self.mu

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center"] = list(self.center)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeometryMeta":
        d = dict(d)
        d["center"] = tuple(d.get("center", (0.0, 0.0)))
        return cls(**d)


@dataclass
class PointCloudSample:
    coords: np.ndarray
    fields: np.ndarray
    surface_mask: np.ndarray
    meta: GeometryMeta

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.fields = np.asarray(self.fields, dtype=np.float64)
        self.surface_mask = np.asarray(self.surface_mask, dtype=bool)
        n = self.coords.shape[0]
        if self.coords.shape != (n, 2) or self.fields.shape != (n, 3) or self.surface_mask.shape != (n,):
            raise DataError(
                f"inconsistent shapes: coords {self.coords.shape}, fields {self.fields.shape}, "
                f"mask {self.surface_mask.shape}"
            )

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    def validate(self) -> "PointCloudSample":
        if not (np.all(np.isfinite(self.coords)) and np.all(np.isfinite(self.fields))):
            raise DataError("sample contains non-finite values")
        if np.unique(self.coords, axis=0).shape[0] != self.n_points:
            raise DataError("sample contains duplicate coordinates")
        n_surface = int(self.surface_mask.sum())
        if 0 < n_surface < 3:
            raise DataError(f"need at least 3 surface points, got {n_surface}")
        return self

    def subset(self, index) -> "PointCloudSample":
        return replace(
            self, coords=self.coords[index], fields=self.fields[index], surface_mask=self.surface_mask[index]
        )

    def with_fields(self, fields: np.ndarray) -> "PointCloudSample":
        return replace(self, fields=np.asarray(fields, dtype=np.float64))
