"""Closed-form inviscid flow around circles and ellipses, sampled as point clouds.

The body is the Joukowski image ``z = zeta + c2 / zeta`` of a circle of radius
R; c2 = 0 gives a circle. In the zeta plane the flow is the classical
doublet-plus-uniform-stream, so the complex velocity in the physical plane is

    u - i v = U (1 - R^2 e^{-2 i theta0} / zeta^2) / (1 - c2 / zeta^2)

for a body rotated by ``theta0`` in a stream along +x. Pressure follows from
Bernoulli, p = p0 + rho/2 (U^2 - |u|^2).

Points are laid out on an O-grid: rings of equal angular count whose radii
grow geometrically away from the body, mimicking the refinement of a body-fitted
mesh. The N points nearest the body center form the cloud.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, DataError
from .sample import GeometryMeta, PointCloudSample
from .transforms import select_nearest_vertices

MIN_POINTS = 32
MAX_RETRIES = 8
_EXTRA_RINGS = 4


def _joukowski(geom: GeometryMeta) -> tuple[float, float, float]:
    """(R, c2, theta0) for the body."""
    if geom.kind == "circle":
        return geom.params["radius"], 0.0, 0.0
    a, b = geom.params["semi_major"], geom.params["semi_minor"]
    return 0.5 * (a + b), 0.25 * (a * a - b * b), geom.params["orientation"]


def _check_geometry(geom: GeometryMeta) -> None:
    if geom.kind == "ellipse":
        a, b = geom.params["semi_major"], geom.params["semi_minor"]
        ratio = min(a, b) / max(a, b)
        if ratio < 0.05:
            raise ConfigError(f"semi_minor: axis ratio {ratio:.3g} is degenerate (< 0.05)")


def complex_velocity(zeta: np.ndarray, geom: GeometryMeta) -> np.ndarray:
    """u - i v at circle-plane locations ``zeta``."""
    R, c2, theta0 = _joukowski(geom)
    inv2 = 1.0 / (zeta * zeta)
    return geom.u_inf * (1.0 - R * R * np.exp(-2j * theta0) * inv2) / (1.0 - c2 * inv2)


def _to_physical(zeta: np.ndarray, geom: GeometryMeta) -> np.ndarray:
    _, c2, theta0 = _joukowski(geom)
    return np.exp(1j * theta0) * (zeta + c2 / zeta) + complex(*geom.center)


def _to_circle_plane(z: np.ndarray, geom: GeometryMeta) -> np.ndarray:
    R, c2, theta0 = _joukowski(geom)
    zb = np.exp(-1j * theta0) * (z - complex(*geom.center))
    if c2 == 0.0:
        return zb
    root = np.sqrt(zb * zb - 4.0 * c2)
    z1, z2 = 0.5 * (zb + root), 0.5 * (zb - root)
    return np.where(np.abs(z1) >= np.abs(z2), z1, z2)


def velocity_at(points: np.ndarray, geom: GeometryMeta) -> np.ndarray:
    """Analytic (u, v) at physical points outside the body, shape [M, 2]."""
    pts = np.asarray(points, dtype=np.float64)
    w = complex_velocity(_to_circle_plane(pts[:, 0] + 1j * pts[:, 1], geom), geom)
    return np.stack([w.real, -w.imag], axis=1)


def pressure_from_velocity(uv: np.ndarray, geom: GeometryMeta) -> np.ndarray:
    speed2 = np.sum(np.asarray(uv) ** 2, axis=-1)
    return geom.p0 + 0.5 * geom.rho * (geom.u_inf**2 - speed2)


def flow_at(points: np.ndarray, geom: GeometryMeta) -> np.ndarray:
    """(u, v, p) at physical points, shape [M, 3]."""
    uv = velocity_at(points, geom)
    return np.column_stack([uv, pressure_from_velocity(uv, geom)])


def inside_body(points: np.ndarray, geom: GeometryMeta, tol: float = 1e-9) -> np.ndarray:
    """True for points strictly inside the body (surface points excluded by ``tol``)."""
    pts = np.asarray(points, dtype=np.float64)
    theta0 = _joukowski(geom)[2]
    zb = np.exp(-1j * theta0) * (pts[:, 0] + 1j * pts[:, 1] - complex(*geom.center))
    if geom.kind == "circle":
        a = b = geom.params["radius"]
    else:
        a, b = geom.params["semi_major"], geom.params["semi_minor"]
    return (zb.real / a) ** 2 + (zb.imag / b) ** 2 < 1.0 - tol


def ring_layout(n_points: int) -> tuple[int, float]:
    """(points per ring, radial growth factor) giving roughly square cells."""
    per_ring = max(16, int(round(2.0 * math.sqrt(n_points))))
    return per_ring, 1.0 + 2.0 * math.pi / per_ring


def generate_potential_flow_cloud(geom: GeometryMeta, n_points: int, seed=None) -> PointCloudSample:
    """Sample ``n_points`` around the body and label them with the analytic flow."""
    if n_points < MIN_POINTS:
        raise ConfigError(f"n_points: need at least {MIN_POINTS}, got {n_points}")
    _check_geometry(geom)
    rng = np.random.default_rng(seed)
    R = _joukowski(geom)[0]
    per_ring, growth = ring_layout(n_points)
    n_rings = math.ceil(n_points / per_ring) + _EXTRA_RINGS
    radii = R * growth ** np.arange(n_rings)
    base = 2.0 * np.pi * np.arange(per_ring) / per_ring
    for _ in range(MAX_RETRIES):
        offsets = rng.uniform(0.0, 2.0 * np.pi / per_ring, size=n_rings)
        zeta = (radii[:, None] * np.exp(1j * (base[None, :] + offsets[:, None]))).ravel()
        z = _to_physical(zeta, geom)
        pts = np.column_stack([z.real, z.imag])
        surface = np.zeros(zeta.size, dtype=bool)
        surface[:per_ring] = True
        if np.any(inside_body(pts[~surface], geom)):
            continue
        idx = select_nearest_vertices(pts, geom.center, n_points)
        w = complex_velocity(zeta[idx], geom)
        uv = np.column_stack([w.real, -w.imag])
        fields = np.column_stack([uv, pressure_from_velocity(uv, geom)])
        sample = PointCloudSample(pts[idx], fields, surface[idx], geom)
        try:
            return sample.validate()
        except DataError:
            continue
    raise DataError(f"could not place {n_points} valid points around {geom.kind} after {MAX_RETRIES} attempts")


_RANGE_KEYS = {"circle": ("radius",), "ellipse": ("semi_major", "axis_ratio", "orientation")}


def random_geometry(kind: str, rng: np.random.Generator, ranges: dict | None = None, **constants) -> GeometryMeta:
    """Draw a body uniformly from parameter ranges (defaults suit unit free stream)."""
    ranges = dict(ranges or {})
    allowed = _RANGE_KEYS.get(kind)
    if allowed is None:
        raise ConfigError(f"kind: expected 'circle' or 'ellipse', got {kind!r}")
    for key, value in ranges.items():
        if key not in allowed:
            raise ConfigError(f"{key}: not a parameter range of {kind} (allowed: {', '.join(allowed)})")
        if len(value) != 2 or not value[0] <= value[1]:
            raise ConfigError(f"{key}: expected [low, high] with low <= high, got {value!r}")
    if kind == "circle":
        lo, hi = ranges.get("radius", (0.5, 1.0))
        return GeometryMeta("circle", {"radius": rng.uniform(lo, hi)}, **constants)
    else:
        lo, hi = ranges.get("semi_major", (0.6, 1.0))
        rlo, rhi = ranges.get("axis_ratio", (0.5, 0.85))
        olo, ohi = ranges.get("orientation", (0.0, math.pi))
        a = rng.uniform(lo, hi)
        b = a * rng.uniform(rlo, rhi)
        return GeometryMeta(
            "ellipse", {"semi_major": a, "semi_minor": b, "orientation": rng.uniform(olo, ohi)}, **constants
        )


def generate_dataset(families: list[dict], n_points: int, seed=0) -> list[PointCloudSample]:
    """Samples for each family ``{"kind", "count", optional parameter ranges}``, in order."""
    rng = np.random.default_rng(seed)
    samples = []
    for fam in families:
        fam = dict(fam)
        kind = fam.pop("kind", None)
        count = int(fam.pop("count", 0))
        if count < 0:
            raise ConfigError(f"count: must be non-negative, got {count}")
        constants = {k: fam.pop(k) for k in ("rho", "u_inf", "mu", "p0") if k in fam}
        for _ in range(count):
            geom = random_geometry(kind, rng, fam, **constants)
            samples.append(generate_potential_flow_cloud(geom, n_points, seed=rng.integers(2**63)))
    return samples
