"""Shared MLP layer for the baseline PointNet."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError

ACTIVATIONS = ("relu", "sigmoid", "none")


class MlpLayer:
    """``out = act(W x + b)`` applied identically at every point.

    Weights use Glorot-uniform initialization and biases start at zero.
    """

    def __init__(self, d_in: int, d_out: int, activation: str = "relu", weights=None, bias=None, rng=None):
        if activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        self.activation = activation
        if weights is None:
            rng = np.random.default_rng(rng)
            limit = np.sqrt(6.0 / (self.d_in + self.d_out))
            weights = rng.uniform(-limit, limit, size=(self.d_out, self.d_in))
        if bias is None:
            bias = np.zeros(self.d_out)
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.shape != (self.d_out, self.d_in) or bias.shape != (self.d_out,):
            raise DimensionError(
                f"expected W {(self.d_out, self.d_in)} and b {(self.d_out,)}, got {weights.shape}, {bias.shape}"
            )
        self.weights = T.Tensor(weights, requires_grad=True)
        self.bias = T.Tensor(bias, requires_grad=True)

    def parameters(self) -> dict[str, T.Tensor]:
        return {"weights": self.weights, "bias": self.bias}

    def n_trainable(self) -> int:
        return self.d_in * self.d_out + self.d_out

    def _activate(self, z: T.Tensor) -> T.Tensor:
        if self.activation == "relu":
            return T.relu(z)
        if self.activation == "sigmoid":
            return T.sigmoid(z)
        return z

    def forward(self, x: T.Tensor) -> T.Tensor:
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"MLP layer expects {self.d_in} input channels, got {x.shape[-1]}")
        return self._activate(T.contract(x, self.weights) + self.bias)

    def forward_split(self, local: T.Tensor, global_feat: T.Tensor) -> T.Tensor:
        """Same as forward(concat(local, broadcast(global_feat))), computed per cloud for the global part."""
        c1 = local.shape[-1]
        if c1 + global_feat.shape[-1] != self.d_in or global_feat.shape[0] != local.shape[0]:
            raise DimensionError(
                f"split input {local.shape} + {global_feat.shape} does not match d_in={self.d_in}"
            )
        per_point = T.contract(local, self.weights[:, :c1])
        per_cloud = T.contract(global_feat, self.weights[:, c1:]) + self.bias
        return self._activate(per_point + per_cloud.reshape(per_cloud.shape[0], 1, self.d_out))

    __call__ = forward


def shared_mlp_forward(x: T.Tensor, params: MlpLayer) -> T.Tensor:
    return params.forward(x)
