"""Checkpoint container: model config, named tensors, scaling and optimizer state.

Layout (little endian)::

    b"KAPT" | u16 version | u32 header_len | header JSON (utf-8) | f64 tensor data

The header lists every tensor as ``{"name", "shape", "offset"}`` where the
offset counts float64 values from the start of the data block. Tensors are
written in sorted-name order and the JSON uses sorted keys, so identical
state gives identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data.scaling import ScalingParams
from .errors import DataError, VersionMismatchError
from .model import Model, ModelConfig, build_model
from .training import Adam

MAGIC = b"KAPT"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


@dataclass
class Checkpoint:
    model: Model
    scaling: ScalingParams | None = None
    optimizer: dict | None = None
    optimizer_arrays: dict[str, np.ndarray] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def make_optimizer(self) -> Adam:
        opt = Adam(self.model.parameters())
        if self.optimizer is not None:
            opt.load(self.optimizer, self.optimizer_arrays)
        return opt


def encode_checkpoint(model: Model, scaling: ScalingParams | None = None, optimizer: Adam | None = None,
                      extra: dict | None = None) -> bytes:
    arrays = {f"model.{k}": v for k, v in model.state_arrays().items()}
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    index, blocks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        index.append({"name": name, "shape": list(a.shape), "offset": offset})
        blocks.append(a.tobytes())
        offset += a.size
    header = {
        "config": model.config.to_dict(),
        "scaling": scaling.to_dict() if scaling is not None else None,
        "optimizer": optimizer.hyper() if optimizer is not None else None,
        "extra": extra or {},
        "tensors": index,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + b"".join(blocks)


def decode_checkpoint(buf: bytes) -> Checkpoint:
    if len(buf) < _PREFIX.size:
        raise DataError("truncated checkpoint")
    magic, version, head_len = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise DataError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError("checkpoint", version, [VERSION])
    start = _PREFIX.size + head_len
    header = json.loads(buf[_PREFIX.size : start].decode("utf-8"))
    data = np.frombuffer(buf, dtype="<f8", offset=start)
    arrays = {}
    for entry in header["tensors"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        lo = entry["offset"]
        if lo + size > data.size:
            raise DataError(f"checkpoint tensor {entry['name']!r} runs past end of file")
        arrays[entry["name"]] = data[lo : lo + size].reshape(entry["shape"]).astype(np.float64)
    model = build_model(ModelConfig.from_dict(header["config"]))
    model.load_state_arrays({k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")})
    scaling = ScalingParams.from_dict(header["scaling"]) if header.get("scaling") else None
    opt_arrays = {k: v for k, v in arrays.items() if k.startswith("adam.")}
    return Checkpoint(model, scaling, header.get("optimizer"), opt_arrays, header.get("extra") or {})


def save_checkpoint(path, model: Model, scaling: ScalingParams | None = None, optimizer: Adam | None = None,
                    extra: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(encode_checkpoint(model, scaling, optimizer, extra))
    return path


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
