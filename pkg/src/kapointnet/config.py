"""Declarative run description loaded from one YAML file.

Schema (version 1)::

    schema_version: 1
    output_dir: runs/demo          # relative paths resolve under the output root
    dataset:
      path: data/demo
      n_points: 256
      seed: 0
      families:
        - {kind: circle, count: 40, radius: [0.5, 1.0]}
        - {kind: ellipse, count: 40, semi_major: [0.6, 1.0], axis_ratio: [0.5, 0.85]}
      split: {ratios: [0.8, 0.1, 0.1], seed: 0}
      label_noise: 0.0             # Gaussian noise on training labels, fraction of per-variable std
      noise_seed: 0
    model: {mode: KAN, n_s: "1/4", degree: 3, alpha: 1.0, beta: 1.0, norm: batch, seed: 0}
    train: {batch_size: 8, lr: 5.0e-4, max_epochs: 2000, patience: 100, min_delta: 1.0e-6, seed: 0}

``model.n_points`` defaults to ``dataset.n_points``. The output root is
``$KAPOINTNET_OUTPUT_ROOT`` when set, otherwise the working directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError, VersionMismatchError
from .model import ModelConfig
from .training import TrainConfig

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "KAPOINTNET_OUTPUT_ROOT"
_TOP_KEYS = {"schema_version", "output_dir", "dataset", "model", "train"}
_DATASET_KEYS = {"path", "n_points", "seed", "families", "split", "label_noise", "noise_seed"}


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or ".")


def resolve(path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else output_root() / p


@dataclass
class DatasetConfig:
    path: str = "data"
    n_points: int = 256
    seed: int = 0
    families: list = field(default_factory=lambda: [{"kind": "circle", "count": 40}, {"kind": "ellipse", "count": 40}])
    split_ratios: tuple = (0.8, 0.1, 0.1)
    split_seed: int = 0
    label_noise: float = 0.0
    noise_seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        unknown = set(d) - _DATASET_KEYS
        if unknown:
            raise ConfigError(f"dataset: unknown keys {sorted(unknown)}")
        split = dict(d.get("split") or {})
        bad = set(split) - {"ratios", "seed"}
        if bad:
            raise ConfigError(f"dataset.split: unknown keys {sorted(bad)}")
        out = cls(
            path=str(d.get("path", cls.path)),
            n_points=int(d.get("n_points", cls.n_points)),
            seed=int(d.get("seed", 0)),
            split_ratios=tuple(float(r) for r in split.get("ratios", (0.8, 0.1, 0.1))),
            split_seed=int(split.get("seed", 0)),
            label_noise=float(d.get("label_noise", 0.0)),
            noise_seed=int(d.get("noise_seed", 0)),
        )
        if "families" in d:
            fams = d["families"]
            if not isinstance(fams, list) or not all(isinstance(f, dict) for f in fams):
                raise ConfigError("dataset.families: expected a list of mappings")
            out.families = [dict(f) for f in fams]
        if out.label_noise < 0:
            raise ConfigError(f"dataset.label_noise: must be non-negative, got {out.label_noise}")
        return out

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "n_points": self.n_points,
            "seed": self.seed,
            "families": self.families,
            "split": {"ratios": list(self.split_ratios), "seed": self.split_seed},
            "label_noise": self.label_noise,
            "noise_seed": self.noise_seed,
        }


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "run"
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("run config must be a mapping")
        version = d.get("schema_version")
        if version is None:
            raise ConfigError("schema_version: missing")
        if version != SCHEMA_VERSION:
            raise VersionMismatchError("run config schema", version, [SCHEMA_VERSION])
        unknown = set(d) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        dataset = DatasetConfig.from_dict(d.get("dataset") or {})
        model_d = dict(d.get("model") or {})
        model_d.setdefault("n_points", dataset.n_points)
        return cls(
            dataset=dataset,
            model=ModelConfig.from_dict(model_d),
            train=TrainConfig.from_dict(dict(d.get("train") or {})),
            output_dir=str(d.get("output_dir", "run")),
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "output_dir": self.output_dir,
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
        }

    @property
    def dataset_dir(self) -> Path:
        return resolve(self.dataset.path)

    @property
    def run_dir(self) -> Path:
        return resolve(self.output_dir)


def load_run_config(path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    return RunConfig.from_dict(raw)


def dump_run_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
