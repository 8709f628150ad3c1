"""Error metrics, histograms, surface forces and robustness sweeps.

Every metric works on physical values: network outputs are unscaled and
redimensionalized before they are compared with the stored fields.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data.sample import FIELD_NAMES, PointCloudSample
from .data.scaling import ScalingParams, fields_from_network, nondimensionalize, output_range_for
from .data.transforms import drop_points
from .errors import ConfigError, GeometryError, UndefinedMetricError, UnsupportedModeError

DEFAULT_BINS = 20
DROPOUT_GRID = (2, 5, 8, 10, 12, 15)


def relative_l2_error(pred, true) -> float:
    """||pred - true|| / ||true||."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    true = np.asarray(true, dtype=np.float64).ravel()
    if pred.shape != true.shape:
        raise ConfigError(f"prediction has {pred.size} values, truth has {true.size}")
    norm = np.linalg.norm(true)
    if norm == 0:
        raise UndefinedMetricError("relative L2 error is undefined for an all-zero truth")
    return float(np.linalg.norm(pred - true) / norm)


@dataclass
class ErrorSummary:
    """Per-sample relative L2 errors [m, 3] for (u, v, p) and their aggregates."""

    per_sample: np.ndarray
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        self.per_sample = np.asarray(self.per_sample, dtype=np.float64).reshape(-1, len(FIELD_NAMES))
        if self.per_sample.shape[0] == 0:
            raise UndefinedMetricError("cannot summarize an empty sample set")

    def _agg(self, fn) -> dict[str, float]:
        return {k: float(v) for k, v in zip(FIELD_NAMES, fn(self.per_sample, axis=0))}

    @property
    def avg(self) -> dict[str, float]:
        return self._agg(np.mean)

    @property
    def max(self) -> dict[str, float]:
        return self._agg(np.max)

    @property
    def min(self) -> dict[str, float]:
        return self._agg(np.min)

    def histogram(self, variable: str) -> tuple[np.ndarray, np.ndarray]:
        """Counts and edges of ``bins`` uniform bins on [0, observed max]."""
        col = self.per_sample[:, FIELD_NAMES.index(variable)]
        top = float(col.max())
        return np.histogram(col, bins=self.bins, range=(0.0, top if top > 0 else 1.0))

    def to_dict(self) -> dict:
        return {
            "n_samples": int(self.per_sample.shape[0]),
            "avg": self.avg,
            "max": self.max,
            "min": self.min,
            "per_sample": self.per_sample.tolist(),
        }


def _check_scaling(model, scaling: ScalingParams) -> None:
    expected = output_range_for(model.config.mode)
    if scaling.output_range != expected:
        raise ConfigError(
            f"{model.config.mode} model needs outputs scaled to {expected}, scaling uses {scaling.output_range}"
        )


def predict_fields(model, samples: Sequence[PointCloudSample], scaling: ScalingParams,
                   batch_size: int = 64) -> list[np.ndarray]:
    """Physical (u, v, p) predictions per sample; clouds may differ in size."""
    _check_scaling(model, scaling)
    out: list[np.ndarray | None] = [None] * len(samples)
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.n_points, []).append(i)
    for idx in groups.values():
        x = np.stack([scaling.scale_coords(samples[i].coords) for i in idx])
        y = model.predict(x, batch_size=batch_size)
        for j, i in enumerate(idx):
            out[i] = fields_from_network(y[j], samples[i].meta, scaling)
    return out


def _verify_round_trip(sample: PointCloudSample, scaling: ScalingParams) -> None:
    nd = nondimensionalize(sample).fields
    back = scaling.unscale_fields(scaling.scale_fields(nd))
    span = np.asarray(scaling.maxs[2:]) - np.asarray(scaling.mins[2:])
    if not np.all(np.abs(back - nd) <= 1e-9 * span):
        raise ConfigError("scaling round trip is not exact for this sample")


def errors_from_predictions(samples: Sequence[PointCloudSample], predictions: Sequence[np.ndarray],
                            bins: int = DEFAULT_BINS) -> ErrorSummary:
    if len(samples) == 0:
        raise UndefinedMetricError("cannot summarize an empty sample set")
    rows = [
        [relative_l2_error(pred[:, k], s.fields[:, k]) for k in range(len(FIELD_NAMES))]
        for s, pred in zip(samples, predictions)
    ]
    return ErrorSummary(np.array(rows), bins)


def summarize_errors(model, samples: Sequence[PointCloudSample], scaling: ScalingParams,
                     bins: int = DEFAULT_BINS, batch_size: int = 64) -> ErrorSummary:
    """Relative L2 error of every sample and variable, on physical values."""
    if len(samples) == 0:
        raise UndefinedMetricError("cannot summarize an empty sample set")
    for s in samples:
        _verify_round_trip(s, scaling)
    return errors_from_predictions(samples, predict_fields(model, samples, scaling, batch_size), bins)


# -- surface forces -----------------------------------------------------------------

@dataclass(frozen=True)
class ForceResult:
    """Pressure force exerted by the fluid on the body, F = -(closed integral) p n ds."""

    drag: float
    lift: float


def _segments_cross(p1, p2, q1, q2) -> np.ndarray:
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def order_surface(points: np.ndarray) -> np.ndarray:
    """Indices sorting surface points counterclockwise by polar angle about their centroid."""
    c = points.mean(axis=0)
    ang = np.arctan2(points[:, 1] - c[1], points[:, 0] - c[0])
    return np.argsort(ang, kind="stable")


def check_simple_polygon(poly: np.ndarray) -> None:
    n = len(poly)
    a, b = poly, np.roll(poly, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))  # edges sharing vertex 0
    i, j = i[keep], j[keep]
    hits = _segments_cross(a[i], b[i], a[j], b[j])
    if np.any(hits):
        k = int(np.argmax(hits))
        raise GeometryError(f"surface polygon self-intersects (edges {int(i[k])} and {int(j[k])})")


def surface_pressure_force(sample: PointCloudSample, pressure=None) -> ForceResult:
    """Midpoint-rule pressure force over the angle-ordered surface polygon.

    ``pressure`` gives one value per point of ``sample`` (default: the stored
    pressure). Each edge contributes -p_mid * length * outward normal.
    """
    mask = sample.surface_mask
    if int(mask.sum()) < 3:
        raise GeometryError(f"need at least 3 surface points, got {int(mask.sum())}")
    p_all = sample.fields[:, 2] if pressure is None else np.asarray(pressure, dtype=np.float64).ravel()
    if p_all.shape[0] != sample.n_points:
        raise ConfigError(f"pressure has {p_all.shape[0]} values for {sample.n_points} points")
    pts = sample.coords[mask]
    p = p_all[mask]
    order = order_surface(pts)
    poly, p = pts[order], p[order]
    check_simple_polygon(poly)
    d = np.roll(poly, -1, axis=0) - poly
    p_mid = 0.5 * (p + np.roll(p, -1))
    # outward normal * length for a counterclockwise polygon is (dy, -dx)
    fx = -np.sum(p_mid * d[:, 1])
    fy = np.sum(p_mid * d[:, 0])
    return ForceResult(float(fx), float(fy))


# -- sweeps and comparisons ---------------------------------------------------------

def dropout_sweep(model, samples: Sequence[PointCloudSample], scaling: ScalingParams,
                  percentages: Sequence[float] = DROPOUT_GRID, seed=0, bins: int = DEFAULT_BINS) -> dict:
    """ErrorSummary per dropout percentage; sample i uses seed (seed, i)."""
    if model.config.norm == "layer":
        raise UnsupportedModeError("layer-norm models are tied to a fixed point count; dropout sweep unavailable")
    out = {}
    for pct in percentages:
        reduced = [drop_points(s, pct, seed=(int(seed), i)) for i, s in enumerate(samples)]
        out[pct] = summarize_errors(model, reduced, scaling, bins)
    return out


@dataclass
class ModelReport:
    name: str
    n_parameters: int
    summary: ErrorSummary
    seconds_per_epoch: float | None = None

    def to_dict(self) -> dict:
        d = {"name": self.name, "n_parameters": self.n_parameters, "errors": self.summary.to_dict()}
        d["seconds_per_epoch"] = self.seconds_per_epoch
        return d


@dataclass
class Comparison:
    reports: list[ModelReport] = field(default_factory=list)

    def rows(self) -> list[list]:
        """Table rows: metric label followed by one column per model."""
        rows = [["Number of trainable parameters", *[r.n_parameters for r in self.reports]]]
        for agg in ("avg", "max", "min"):
            label = {"avg": "Average", "max": "Maximum", "min": "Minimum"}[agg]
            for v in FIELD_NAMES:
                rows.append([f"{label} ||{v}_pred-{v}||/||{v}||",
                             *[getattr(r.summary, agg)[v] for r in self.reports]])
        rows.append(["Seconds per epoch", *[r.seconds_per_epoch for r in self.reports]])
        return rows

    def to_dict(self) -> dict:
        return {"models": [r.to_dict() for r in self.reports]}

    def write(self, json_path, csv_path) -> None:
        Path(json_path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", *[r.name for r in self.reports]])
            for row in self.rows():
                w.writerow(["" if v is None else v for v in row])


def compare_models(entries: Sequence[tuple], samples: Sequence[PointCloudSample]) -> Comparison:
    """Side-by-side evaluation.

    ``entries`` holds ``(name, model, scaling)`` or ``(name, model, scaling,
    seconds_per_epoch)``; each model is evaluated with its own scaling.
    """
    reports = []
    for entry in entries:
        name, model, scaling = entry[:3]
        secs = entry[3] if len(entry) > 3 else None
        reports.append(ModelReport(name, model.count_trainable_parameters(),
                                   summarize_errors(model, samples, scaling), secs))
    return Comparison(reports)


# -- report files ---------------------------------------------------------------------

def write_summary_json(path, summary: ErrorSummary, extra: dict | None = None) -> None:
    d = summary.to_dict()
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def write_per_sample_csv(path, summary: ErrorSummary, sample_ids: Sequence | None = None) -> None:
    ids = list(sample_ids) if sample_ids is not None else list(range(summary.per_sample.shape[0]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", *FIELD_NAMES])
        for sid, row in zip(ids, summary.per_sample):
            w.writerow([sid, *[repr(float(v)) for v in row]])


def write_histogram_csv(path, summary: ErrorSummary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "bin_low", "bin_high", "count"])
        for v in FIELD_NAMES:
            counts, edges = summary.histogram(v)
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                w.writerow([v, repr(float(lo)), repr(float(hi)), int(c)])


def write_sweep_csv(path, sweep: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["percentage", *[f"{a}_{v}" for a in ("avg", "max", "min") for v in FIELD_NAMES]])
        for pct, s in sweep.items():
            w.writerow([pct, *[repr(getattr(s, a)[v]) for a in ("avg", "max", "min") for v in FIELD_NAMES]])


def write_force_csv(path, rows: Sequence[tuple]) -> None:
    """``rows`` of (sample id, true ForceResult, predicted ForceResult)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "drag_true", "lift_true", "drag_pred", "lift_pred", "drag_abs_error", "lift_abs_error"])
        for sid, t, p in rows:
            w.writerow([sid, repr(t.drag), repr(t.lift), repr(p.drag), repr(p.lift),
                        repr(abs(p.drag - t.drag)), repr(abs(p.lift - t.lift))])
