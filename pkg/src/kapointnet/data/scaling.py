"""Nondimensionalization and min/max scaling of coordinates and flow fields."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DegenerateRangeError, VersionMismatchError
from .sample import PointCloudSample

VARIABLES = ("x", "y", "u", "v", "p")
RANGES = ("[-1,1]", "[0,1]")


def nondimensionalize(sample: PointCloudSample) -> PointCloudSample:
    """u* = u/u_inf, v* = v/u_inf, p* = (p - p0)/(rho u_inf^2); coordinates unchanged."""
    m = sample.meta
    if m.u_inf == 0:
        raise ConfigError("u_inf: must be non-zero to nondimensionalize")
    f = sample.fields
    out = np.column_stack([f[:, 0] / m.u_inf, f[:, 1] / m.u_inf, (f[:, 2] - m.p0) / (m.rho * m.u_inf**2)])
    return sample.with_fields(out)


def dimensionalize(fields: np.ndarray, meta) -> np.ndarray:
    """Inverse of :func:`nondimensionalize` for a field array [N, 3]."""
    f = np.asarray(fields, dtype=np.float64)
    return np.column_stack([f[:, 0] * meta.u_inf, f[:, 1] * meta.u_inf, f[:, 2] * meta.rho * meta.u_inf**2 + meta.p0])


@dataclass(frozen=True)
class ScalingParams:
    """Training-set extrema of x, y, u, v, p.

    Coordinates always map to [-1, 1]; the fields map to ``output_range``
    ([-1, 1] for KAN models, [0, 1] for the sigmoid-headed MLP).
    """

    mins: tuple[float, ...]
    maxs: tuple[float, ...]
    output_range: str = "[-1,1]"

    def __post_init__(self):
        if self.output_range not in RANGES:
            raise ConfigError(f"output_range must be one of {RANGES}, got {self.output_range!r}")
        mins = tuple(float(v) for v in self.mins)
        maxs = tuple(float(v) for v in self.maxs)
        if len(mins) != len(VARIABLES) or len(maxs) != len(VARIABLES):
            raise ConfigError(f"scaling needs {len(VARIABLES)} extrema per side")
        for name, lo, hi in zip(VARIABLES, mins, maxs):
            if not hi > lo:
                raise DegenerateRangeError(f"{name}: max ({hi}) must exceed min ({lo})")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    def _bounds(self, cols: slice):
        return np.asarray(self.mins[cols]), np.asarray(self.maxs[cols])

    def scale_coords(self, coords):
        lo, hi = self._bounds(slice(0, 2))
        return 2.0 * (np.asarray(coords) - lo) / (hi - lo) - 1.0

    def unscale_coords(self, coords):
        lo, hi = self._bounds(slice(0, 2))
        return (np.asarray(coords) + 1.0) * 0.5 * (hi - lo) + lo

    def scale_fields(self, fields):
        lo, hi = self._bounds(slice(2, 5))
        unit = (np.asarray(fields) - lo) / (hi - lo)
        return unit if self.output_range == "[0,1]" else 2.0 * unit - 1.0

    def unscale_fields(self, fields):
        lo, hi = self._bounds(slice(2, 5))
        f = np.asarray(fields)
        unit = f if self.output_range == "[0,1]" else (f + 1.0) * 0.5
        return unit * (hi - lo) + lo

    def with_output_range(self, output_range: str) -> "ScalingParams":
        return replace(self, output_range=output_range)

    def to_dict(self) -> dict:
        return {"version": 1, "mins": list(self.mins), "maxs": list(self.maxs), "output_range": self.output_range}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingParams":
        if d.get("version", 1) != 1:
            raise VersionMismatchError("scaling", d.get("version"), [1])
        return cls(tuple(d["mins"]), tuple(d["maxs"]), d.get("output_range", "[-1,1]"))


def fit_scaling(samples: Sequence[PointCloudSample], output_range: str = "[-1,1]") -> ScalingParams:
    """Extrema over the given (training) samples only."""
    if not samples:
        raise ConfigError("cannot fit scaling on an empty sample set")
    coords = np.concatenate([s.coords for s in samples], axis=0)
    fields = np.concatenate([s.fields for s in samples], axis=0)
    data = np.column_stack([coords, fields])
    return ScalingParams(tuple(data.min(axis=0)), tuple(data.max(axis=0)), output_range)


def apply_scaling(sample: PointCloudSample, params: ScalingParams) -> PointCloudSample:
    """Scaled copy; values outside the fitted range are left unclipped."""
    return replace(sample, coords=params.scale_coords(sample.coords), fields=params.scale_fields(sample.fields))


def invert_scaling(sample: PointCloudSample, params: ScalingParams) -> PointCloudSample:
    return replace(sample, coords=params.unscale_coords(sample.coords), fields=params.unscale_fields(sample.fields))


def stack_scaled(samples: Sequence[PointCloudSample], params: ScalingParams) -> tuple[np.ndarray, np.ndarray]:
    """Scaled network inputs [m,N,2] and targets [m,N,3]; all samples must share N."""
    n = {s.n_points for s in samples}
    if len(n) != 1:
        raise ConfigError(f"samples have differing point counts {sorted(n)}; cannot stack")
    x = np.stack([params.scale_coords(s.coords) for s in samples])
    y = np.stack([params.scale_fields(s.fields) for s in samples])
    return x, y


def output_range_for(mode: str) -> str:
    """KAN heads are unbounded and train on [-1, 1]; the sigmoid MLP head needs [0, 1]."""
    return "[0,1]" if str(mode).upper() == "MLP" else "[-1,1]"


def fit_flow_scaling(samples: Sequence[PointCloudSample], output_range: str = "[-1,1]") -> ScalingParams:
    """Fit on the nondimensional training fields (coordinates stay in meters)."""
    return fit_scaling([nondimensionalize(s) for s in samples], output_range)


def network_arrays(samples: Sequence[PointCloudSample], params: ScalingParams) -> tuple[np.ndarray, np.ndarray]:
    """Physical samples -> nondimensional -> scaled network inputs and targets."""
    return stack_scaled([nondimensionalize(s) for s in samples], params)


def fields_from_network(pred_scaled: np.ndarray, meta, params: ScalingParams) -> np.ndarray:
    """Scaled per-point network output [N,3] -> physical (u, v, p)."""
    return dimensionalize(params.unscale_fields(pred_scaled), meta)
