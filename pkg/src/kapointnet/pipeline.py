"""End-to-end steps shared by the command line and the acceptance tests."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, dump_run_config
from .data.flow import generate_dataset
from .data.io import import_csv, load_dataset, read_manifest, read_sample, save_dataset
from .data.sample import GeometryMeta, PointCloudSample
from .data.scaling import fit_flow_scaling, network_arrays, output_range_for
from .data.transforms import add_gaussian_noise, split_dataset
from .errors import ConfigError
from .model import build_model
from .training import TrainResult, train

CHECKPOINT_NAME = "checkpoint.kapt"
METRICS_NAME = "metrics.csv"
SPLITS = ("train", "val", "test")


def generate(cfg: RunConfig, directory=None) -> tuple[Path, dict[str, int]]:
    """Write the configured synthetic dataset; returns (directory, counts per family kind)."""
    ds = cfg.dataset
    samples = generate_dataset(ds.families, ds.n_points, seed=ds.seed)
    directory = Path(directory) if directory is not None else cfg.dataset_dir
    extra = {"families": ds.families, "n_points": ds.n_points, "seed": ds.seed}
    save_dataset(directory, samples, extra)
    counts: dict[str, int] = {}
    for s in samples:
        counts[s.meta.kind] = counts.get(s.meta.kind, 0) + 1
    return directory, counts


def split_indices(n: int, cfg: RunConfig) -> dict[str, list[int]]:
    parts = split_dataset(list(range(n)), cfg.dataset.split_ratios, seed=cfg.dataset.split_seed)
    return {name: [int(i) for i in part] for name, part in zip(SPLITS, parts)}


@dataclass
class TrainedRun:
    result: TrainResult
    checkpoint_path: Path
    splits: dict[str, list[int]]
    scaling: object


def train_run(cfg: RunConfig, dataset_dir=None, out_dir=None) -> TrainedRun:
    """Split, (optionally) pollute, scale, train and write checkpoint + metrics.

    The checkpoint holds nothing time-dependent, so equal configs give equal bytes.
    """
    dataset_dir = Path(dataset_dir) if dataset_dir is not None else cfg.dataset_dir
    out_dir = Path(out_dir) if out_dir is not None else cfg.run_dir
    samples = load_dataset(dataset_dir)
    n_points = {s.n_points for s in samples}
    if n_points != {cfg.model.n_points}:
        raise ConfigError(f"model.n_points={cfg.model.n_points} but dataset has point counts {sorted(n_points)}")
    splits = split_indices(len(samples), cfg)
    train_s = [samples[i] for i in splits["train"]]
    val_s = [samples[i] for i in splits["val"]]
    if cfg.dataset.label_noise > 0:
        train_s = add_gaussian_noise(train_s, cfg.dataset.label_noise, seed=cfg.dataset.noise_seed)
    scaling = fit_flow_scaling(train_s, output_range_for(cfg.model.mode))
    model = build_model(cfg.model)
    result = train(model, network_arrays(train_s, scaling), network_arrays(val_s, scaling), cfg.train)

    out_dir.mkdir(parents=True, exist_ok=True)
    h = result.history
    extra = {
        "dataset": str(dataset_dir),
        "splits": splits,
        "run_config": cfg.to_dict(),
        "best_epoch": h.best_epoch,
        "stop_reason": h.stop_reason,
    }
    ckpt = save_checkpoint(out_dir / CHECKPOINT_NAME, result.model, scaling, result.optimizer, extra)
    h.write_csv(out_dir / METRICS_NAME)
    (out_dir / "run_config.yaml").write_text(dump_run_config(cfg))
    return TrainedRun(result, ckpt, splits, scaling)


def checkpoint_samples(ckpt: Checkpoint, split: str, dataset_dir=None):
    """The samples of one split of the dataset a checkpoint was trained on."""
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}, got {split!r}")
    splits = ckpt.extra.get("splits")
    directory = dataset_dir if dataset_dir is not None else ckpt.extra.get("dataset")
    if splits is None or directory is None:
        raise ConfigError("checkpoint does not record its dataset split; pass an explicit dataset")
    samples = load_dataset(directory)
    if len(samples) != sum(len(v) for v in splits.values()):
        raise ConfigError(f"dataset at {directory} does not match the split stored in the checkpoint")
    return [samples[i] for i in splits[split]]


def seconds_per_epoch(checkpoint_path) -> float | None:
    """Mean epoch wall time from the metrics CSV written next to a checkpoint."""
    metrics = Path(checkpoint_path).with_name(METRICS_NAME)
    if not metrics.exists():
        return None
    data = np.genfromtxt(metrics, delimiter=",", names=True)
    secs = np.atleast_1d(data["seconds"]) if data.size else np.array([])
    return float(secs.mean()) if secs.size else None


def cloud_meta(path) -> GeometryMeta:
    """Geometry metadata for a cloud file, from a neighbouring manifest when present.

    Bare clouds get a placeholder body with unit density and free stream and
    zero reference pressure; only those constants affect predictions.
    """
    path = Path(path)
    if path.with_name("manifest.json").exists():
        for e in read_manifest(path.parent)["samples"]:
            if e["file"] == path.name:
                return GeometryMeta.from_dict(e["geometry"])
    return GeometryMeta("circle", {"radius": 1.0})


def read_cloud(path) -> PointCloudSample:
    """A ``.kapc`` sample or a CSV with at least ``x,y`` columns."""
    path = Path(path)
    meta = cloud_meta(path)
    if path.suffix.lower() == ".csv":
        return import_csv(path, meta)
    return read_sample(path, meta)


def load(path) -> Checkpoint:
    return load_checkpoint(path)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
