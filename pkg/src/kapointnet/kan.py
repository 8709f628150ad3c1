"""Shared KAN layers: tanh squash, Jacobi expansion, trainable coefficient contraction."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .jacobi import BasisSpec, jacobi_features


class KanLayer:
    """One shared KAN layer with coefficients ``lam[k, j, i]``.

    ``out[..., k] = sum_j sum_i lam[k, j, i] * P_i(tanh(x[..., j]))``. The same
    coefficients are applied at every point, so the layer acts pointwise on
    any leading extents.
    """

    def __init__(self, d_in: int, d_out: int, spec: BasisSpec, lam: np.ndarray | None = None, rng=None):
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        self.spec = spec
        shape = (self.d_out, self.d_in, spec.n_terms)
        if lam is None:
            rng = np.random.default_rng(rng)
            std = np.sqrt(1.0 / (self.d_in * spec.n_terms))
            lam = rng.normal(0.0, std, size=shape)
        lam = np.asarray(lam, dtype=np.float64)
        if lam.shape != shape:
            raise DimensionError(f"coefficients must have shape {shape}, got {lam.shape}")
        self.lam = T.Tensor(lam, requires_grad=True)

    def parameters(self) -> dict[str, T.Tensor]:
        return {"lambda": self.lam}

    def n_trainable(self) -> int:
        return self.lam.size

    def _weights(self, lo: int, hi: int) -> T.Tensor:
        # [d_out, d_in, n+1] -> [d_out, (n+1)*(hi-lo)], term-major like jacobi_features
        lam = self.lam if (lo, hi) == (0, self.d_in) else self.lam[:, lo:hi, :]
        return T.transpose(lam, (0, 2, 1)).reshape(self.d_out, -1)

    def _apply(self, x: T.Tensor, lo: int, hi: int) -> T.Tensor:
        feats = jacobi_features(x, self.spec)
        flat = feats.reshape(x.shape[:-1] + (self.spec.n_terms * x.shape[-1],))
        return T.contract(flat, self._weights(lo, hi))

    def forward(self, x: T.Tensor) -> T.Tensor:
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"KAN layer expects {self.d_in} input channels, got {x.shape[-1]}")
        return self._apply(x, 0, self.d_in)

    def forward_split(self, local: T.Tensor, global_feat: T.Tensor) -> T.Tensor:
        """Evaluate on concat(local, broadcast(global)) without materialising it.

        ``local`` is [B,N,C1], ``global_feat`` is [B,C2] and C1 + C2 = d_in.
        The per-cloud part is computed once per cloud and broadcast over N.
        """
        c1 = local.shape[-1]
        if c1 + global_feat.shape[-1] != self.d_in or global_feat.shape[0] != local.shape[0]:
            raise DimensionError(
                f"split input {local.shape} + {global_feat.shape} does not match d_in={self.d_in}"
            )
        per_point = self._apply(local, 0, c1)
        per_cloud = self._apply(global_feat, c1, self.d_in)
        return per_point + per_cloud.reshape(per_cloud.shape[0], 1, self.d_out)

    __call__ = forward


def kan_layer_init(d_in: int, d_out: int, spec: BasisSpec, seed=None) -> KanLayer:
    """Coefficients drawn i.i.d. Normal(0, 1/(d_in*(n+1)))."""
    return KanLayer(d_in, d_out, spec, rng=np.random.default_rng(seed))


def kan_layer_forward(x: T.Tensor, params: KanLayer) -> T.Tensor:
    return params.forward(x)
