"""Point selection, dataset splits and robustness perturbations."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import DataError, UsageError

MIN_REMAINING_POINTS = 8
DEFAULT_RATIOS = (0.8, 0.1, 0.1)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def select_nearest_vertices(points: np.ndarray, center, n: int) -> np.ndarray:
    """Indices of the ``n`` points closest to ``center``, nearest first; ties by index."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < n:
        raise DataError(f"need at least {n} points, got {pts.shape[0]}")
    d2 = np.sum((pts - np.asarray(center, dtype=np.float64)) ** 2, axis=1)
    return np.argsort(d2, kind="stable")[:n]


def split_dataset(samples: Sequence, ratios: Sequence[float] = DEFAULT_RATIOS, seed=0):
    """Random disjoint (train, validation, test) split.

    Train and validation sizes are ``round(ratio * m)`` (half rounds up); the
    test set takes the remainder.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise UsageError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    m = len(samples)
    n_train = _round_half_up(ratios[0] * m)
    n_val = _round_half_up(ratios[1] * m)
    n_test = m - n_train - n_val
    if min(n_train, n_val, n_test) <= 0:
        raise DataError(f"split of {m} samples with ratios {ratios} leaves an empty part")
    perm = np.random.default_rng(seed).permutation(m)
    pick = lambda idx: [samples[i] for i in idx]  # noqa: E731
    return pick(perm[:n_train]), pick(perm[n_train : n_train + n_val]), pick(perm[n_train + n_val :])


def add_gaussian_noise(samples: Sequence, fraction: float, seed=0) -> list:
    """Perturb every label by Normal(0, (fraction * std of that variable over ``samples``)^2).

    Coordinates are untouched. ``samples`` is normally the training split.
    """
    if fraction < 0:
        raise UsageError(f"noise fraction must be non-negative, got {fraction}")
    if fraction == 0:
        return list(samples)
    stacked = np.concatenate([s.fields for s in samples], axis=0)
    std = stacked.std(axis=0)
    rng = np.random.default_rng(seed)
    return [s.with_fields(s.fields + rng.normal(0.0, 1.0, size=s.fields.shape) * (fraction * std)) for s in samples]


def drop_points(sample, percentage: float, seed=0):
    """Remove a uniformly random ``percentage`` of the points (surface points included).

    ``round(N * (1 - percentage/100))`` points remain, in their original
    order. With a fixed seed larger percentages remove supersets of the
    points removed by smaller ones.
    """
    if not 0 <= percentage < 100:
        raise UsageError(f"percentage must be in [0, 100), got {percentage}")
    n = sample.n_points
    keep = _round_half_up(n * (1.0 - percentage / 100.0))
    if keep < MIN_REMAINING_POINTS:
        raise DataError(f"dropping {percentage}% of {n} points leaves {keep} < {MIN_REMAINING_POINTS}")
    if keep == n:
        return sample
    perm = np.random.default_rng(seed).permutation(n)
    return sample.subset(np.sort(perm[:keep]))
