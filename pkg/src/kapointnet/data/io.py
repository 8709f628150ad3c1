"""Dataset directories: ``manifest.json`` plus one ``.kapc`` binary per sample.

Binary layout (little endian)::

    b"KAPC" | u16 version | u32 N | f64 coords[N*2] | f64 fields[N*3] | u8 surface[N]
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DataError, VersionMismatchError
from .sample import GeometryMeta, PointCloudSample

MAGIC = b"KAPC"
SAMPLE_VERSION = 1
MANIFEST_SCHEMA = 1
MANIFEST_NAME = "manifest.json"
_HEADER = struct.Struct("<4sHI")
CSV_COLUMNS = ("x", "y", "u", "v", "p", "surface")


def encode_sample(sample: PointCloudSample) -> bytes:
    n = sample.n_points
    return b"".join(
        [
            _HEADER.pack(MAGIC, SAMPLE_VERSION, n),
            np.ascontiguousarray(sample.coords, dtype="<f8").tobytes(),
            np.ascontiguousarray(sample.fields, dtype="<f8").tobytes(),
            sample.surface_mask.astype(np.uint8).tobytes(),
        ]
    )


def decode_sample(buf: bytes, meta: GeometryMeta) -> PointCloudSample:
    if len(buf) < _HEADER.size:
        raise DataError("truncated sample file")
    magic, version, n = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != SAMPLE_VERSION:
        raise VersionMismatchError("sample file", version, [SAMPLE_VERSION])
    expected = _HEADER.size + n * (2 + 3) * 8 + n
    if len(buf) != expected:
        raise DataError(f"sample file has {len(buf)} bytes, expected {expected} for N={n}")
    off = _HEADER.size
    coords = np.frombuffer(buf, dtype="<f8", count=2 * n, offset=off).reshape(n, 2)
    off += 16 * n
    fields = np.frombuffer(buf, dtype="<f8", count=3 * n, offset=off).reshape(n, 3)
    off += 24 * n
    mask = np.frombuffer(buf, dtype=np.uint8, count=n, offset=off)
    if np.any(mask > 1):
        raise DataError("surface mask bytes must be 0 or 1")
    return PointCloudSample(coords.astype(np.float64), fields.astype(np.float64), mask.astype(bool), meta)


def write_sample(path, sample: PointCloudSample) -> None:
    Path(path).write_bytes(encode_sample(sample))


def read_sample(path, meta: GeometryMeta) -> PointCloudSample:
    return decode_sample(Path(path).read_bytes(), meta)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def save_dataset(directory, samples: Sequence[PointCloudSample], extra: dict | None = None) -> Path:
    """Write every sample and the manifest. Output is a pure function of the inputs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(samples) - 1)))
    entries = []
    for i, s in enumerate(samples):
        name = f"sample_{i:0{width}d}.kapc"
        write_sample(directory / name, s)
        entries.append(
            {
                "file": name,
                "n_points": s.n_points,
                "n_surface": int(s.surface_mask.sum()),
                "geometry": s.meta.to_dict(),
                "reynolds": s.meta.reynolds,
            }
        )
    manifest = {"format": "kapointnet-dataset", "schema_version": MANIFEST_SCHEMA, "samples": entries}
    if extra:
        manifest["generator"] = extra
    (directory / MANIFEST_NAME).write_text(_dumps(manifest))
    return directory


def read_manifest(directory) -> dict:
    manifest = json.loads((Path(directory) / MANIFEST_NAME).read_text())
    if manifest.get("schema_version") != MANIFEST_SCHEMA:
        raise VersionMismatchError("dataset manifest", manifest.get("schema_version"), [MANIFEST_SCHEMA])
    return manifest


def load_dataset(directory) -> list[PointCloudSample]:
    directory = Path(directory)
    manifest = read_manifest(directory)
    return [
        read_sample(directory / e["file"], GeometryMeta.from_dict(e["geometry"])) for e in manifest["samples"]
    ]


def export_csv(path, sample: PointCloudSample, predicted: np.ndarray | None = None) -> None:
    """``x,y,u,v,p,surface`` per point, plus ``u_pred,v_pred,p_pred`` when given."""
    header = list(CSV_COLUMNS)
    if predicted is not None:
        header += ["u_pred", "v_pred", "p_pred"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(sample.n_points):
            row = [repr(float(v)) for v in (*sample.coords[i], *sample.fields[i])]
            row.append(int(sample.surface_mask[i]))
            if predicted is not None:
                row += [repr(float(v)) for v in predicted[i]]
            w.writerow(row)


def import_csv(path, meta: GeometryMeta) -> PointCloudSample:
    """Read a cloud from CSV with at least x,y columns (missing fields become zero)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{path}: no rows")
    try:
        coords = np.array([[float(r["x"]), float(r["y"])] for r in rows])
        fields = np.array([[float(r.get(k) or 0.0) for k in ("u", "v", "p")] for r in rows])
        mask = np.array([bool(int(r.get("surface") or 0)) for r in rows])
    except KeyError as exc:
        raise DataError(f"{path}: missing column {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    return PointCloudSample(coords, fields, mask, meta)
