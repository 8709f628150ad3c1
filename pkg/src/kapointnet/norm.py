"""Batch and layer normalization with fused analytic backward passes."""

from __future__ import annotations

import numpy as np

from . import _kernels
from . import tensor as T
from .errors import DimensionError, UsageError

BN_MOMENTUM = 0.9
BN_EPSILON = 1e-5
LN_EPSILON = 1e-5


class BatchNorm:
    """Per-channel normalization over every (cloud, point) position.

    Train mode uses batch statistics and updates the running estimates with
    ``running = momentum * running + (1 - momentum) * batch``; infer mode uses
    the running estimates and never touches them.
    """

    def __init__(self, channels: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPSILON):
        self.channels = int(channels)
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.gamma = T.Tensor(np.ones(self.channels), requires_grad=True)
        self.beta_shift = T.Tensor(np.zeros(self.channels), requires_grad=True)
        self.running_mean = np.zeros(self.channels)
        self.running_var = np.ones(self.channels)

    def parameters(self) -> dict[str, T.Tensor]:
        return {"gamma": self.gamma, "beta": self.beta_shift}

    def buffers(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def n_trainable(self) -> int:
        return 2 * self.channels

    def forward(self, x: T.Tensor, training: bool, update_stats: bool = True) -> T.Tensor:
        if x.shape[-1] != self.channels:
            raise DimensionError(f"batch norm over {self.channels} channels got {x.shape[-1]}")
        if training:
            return self._train(x, update_stats)
        return self._infer(x)

    __call__ = forward

    def _train(self, x: T.Tensor, update_stats: bool) -> T.Tensor:
        flat = np.ascontiguousarray(x.data.reshape(-1, self.channels))
        if flat.shape[0] < 2:
            raise UsageError("batch norm in train mode needs at least 2 positions per channel")
        gamma = self.gamma.data
        out, xhat, mu, var, inv = _kernels.batch_norm_train_forward(flat, gamma, self.beta_shift.data, self.eps)
        if update_stats:
            self.running_mean = self.momentum * self.running_mean + (1.0 - self.momentum) * mu
            self.running_var = self.momentum * self.running_var + (1.0 - self.momentum) * var
        shape = x.shape

        def bw(g):
            g = np.ascontiguousarray(g.reshape(-1, self.channels))
            dx, dgamma, dbeta = _kernels.batch_norm_train_backward(g, xhat, gamma, inv)
            return dx.reshape(shape), dgamma, dbeta

        return T.make_op(out.reshape(shape), (x, self.gamma, self.beta_shift), bw, "batch_norm_train")

    def _infer(self, x: T.Tensor) -> T.Tensor:
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        xhat = (x.data - self.running_mean) * inv
        gamma = self.gamma.data
        out = xhat * gamma + self.beta_shift.data
        lead = tuple(range(x.ndim - 1))

        def bw(g):
            return g * (gamma * inv), np.sum(g * xhat, axis=lead), np.sum(g, axis=lead)

        return T.make_op(out, (x, self.gamma, self.beta_shift), bw, "batch_norm_infer")


def batch_norm_forward(x: T.Tensor, params: BatchNorm, mode: str) -> T.Tensor:
    if mode not in ("train", "infer"):
        raise UsageError(f"mode must be 'train' or 'infer', got {mode!r}")
    return params.forward(x, training=(mode == "train"))


class LayerNorm:
    """Per-cloud normalization over the joint (point, channel) extent.

    The affine parameters are elementwise over [N, C], which ties the layer
    to a fixed number of points.
    """

    def __init__(self, n_points: int, channels: int, eps: float = LN_EPSILON):
        self.n_points = int(n_points)
        self.channels = int(channels)
        self.eps = float(eps)
        self.gamma = T.Tensor(np.ones((self.n_points, self.channels)), requires_grad=True)
        self.beta_shift = T.Tensor(np.zeros((self.n_points, self.channels)), requires_grad=True)

    def parameters(self) -> dict[str, T.Tensor]:
        return {"gamma": self.gamma, "beta": self.beta_shift}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def n_trainable(self) -> int:
        return 2 * self.n_points * self.channels

    def forward(self, x: T.Tensor, training: bool = False, update_stats: bool = True) -> T.Tensor:
        if x.ndim != 3 or x.shape[1:] != (self.n_points, self.channels):
            raise DimensionError(
                f"layer norm fixed to [B,{self.n_points},{self.channels}], got {x.shape}"
            )
        d = x.data
        m = self.n_points * self.channels
        mu = d.mean(axis=(1, 2), keepdims=True)
        centered = d - mu
        var = np.mean(centered**2, axis=(1, 2), keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = centered * inv
        gamma = self.gamma.data
        out = xhat * gamma + self.beta_shift.data

        def bw(g):
            dxhat = g * gamma
            dx = inv * (
                dxhat
                - dxhat.sum(axis=(1, 2), keepdims=True) / m
                - xhat * (np.sum(dxhat * xhat, axis=(1, 2), keepdims=True) / m)
            )
            return dx, np.sum(g * xhat, axis=0), np.sum(g, axis=0)

        return T.make_op(out, (x, self.gamma, self.beta_shift), bw, "layer_norm")

    __call__ = forward


def layer_norm_forward(x: T.Tensor, params: LayerNorm) -> T.Tensor:
    return params.forward(x)
