"""KA-PointNet and shared-MLP PointNet segmentation networks.

Both share one layout (all hidden widths multiplied by the global scale n_s)::

    points [B,N,2] -> (64, 64) ---------------------------- local [B,N,64]
                          \\-> (64, 128, 1024) -> max over N -> global [B,1024]
    concat(local, global) [B,N,1088] -> (512, 256, 128) -> (128, n_cfd)

Every layer except the last is followed by a normalization layer. The skip
connection taps the normalized output of the first branch.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .jacobi import BasisSpec
from .kan import KanLayer
from .mlp import MlpLayer
from .norm import BatchNorm, LayerNorm

SPATIAL_DIM = 2
LOCAL_WIDTHS = (64, 64)
ENCODER_WIDTHS = (64, 128, 1024)
DECODER_WIDTHS = (512, 256, 128)
HEAD_WIDTHS = (128,)

MODES = ("KAN", "MLP")
NORMS = ("batch", "layer", "none")


def parse_scale(value) -> Fraction:
    """Accept 0.25, "0.25", "1/4" or a Fraction."""
    if isinstance(value, Fraction):
        frac = value
    else:
        try:
            frac = Fraction(str(value).strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"n_s must be a positive rational, got {value!r}") from exc
    if frac <= 0:
        raise ConfigError(f"n_s must be positive, got {value!r}")
    return frac


def scaled_width(base: int, n_s: Fraction) -> int:
    w = base * n_s
    if w.denominator != 1 or w <= 0:
        raise ConfigError(f"n_s={n_s} gives non-integer width {float(w)} for base width {base}")
    return int(w)


@dataclass(frozen=True)
class ModelConfig:
    mode: str = "KAN"
    n_s: Fraction = Fraction(1)
    degree: int = 3
    alpha: float = 1.0
    beta: float = 1.0
    norm: str = "batch"
    n_points: int = 1024
    n_cfd: int = 3
    seed: int = 0

    def __post_init__(self):
        mode = str(self.mode).upper()
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "n_s", parse_scale(self.n_s))
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if int(self.n_cfd) < 1:
            raise ConfigError(f"n_cfd must be >= 1, got {self.n_cfd}")
        if int(self.n_points) < 1:
            raise ConfigError(f"n_points must be >= 1, got {self.n_points}")
        object.__setattr__(self, "n_cfd", int(self.n_cfd))
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "seed", int(self.seed))
        if self.mode == "KAN":
            BasisSpec(self.degree, self.alpha, self.beta)  # validates
        self.layer_dims()  # validates integrality of widths

    @property
    def basis(self) -> BasisSpec:
        return BasisSpec(self.degree, self.alpha, self.beta)

    def layer_dims(self) -> list[tuple[str, int, int]]:
        """(name, d_in, d_out) for the ten layers in evaluation order."""
        w = lambda b: scaled_width(b, self.n_s)  # noqa: E731
        dims = []
        d = SPATIAL_DIM
        for i, b in enumerate(LOCAL_WIDTHS, 1):
            dims.append((f"local{i}", d, w(b)))
            d = w(b)
        local = d
        for i, b in enumerate(ENCODER_WIDTHS, 1):
            dims.append((f"encoder{i}", d, w(b)))
            d = w(b)
        d = local + d
        for i, b in enumerate(DECODER_WIDTHS, 1):
            dims.append((f"decoder{i}", d, w(b)))
            d = w(b)
        for i, b in enumerate(HEAD_WIDTHS, 1):
            dims.append((f"head{i}", d, w(b)))
            d = w(b)
        dims.append(("output", d, self.n_cfd))
        return dims

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_s"] = str(self.n_s)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass
class LayerSlot:
    name: str
    layer: KanLayer | MlpLayer
    norm: BatchNorm | LayerNorm | None = None


@dataclass
class Model:
    config: ModelConfig
    slots: list[LayerSlot] = field(default_factory=list)

    # -- parameters -----------------------------------------------------------
    def parameters(self) -> dict[str, T.Tensor]:
        out = {}
        for s in self.slots:
            for k, p in s.layer.parameters().items():
                out[f"{s.name}.{k}"] = p
            if s.norm is not None:
                for k, p in s.norm.parameters().items():
                    out[f"{s.name}.norm.{k}"] = p
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for s in self.slots:
            if s.norm is not None:
                for k, b in s.norm.buffers().items():
                    out[f"{s.name}.norm.{k}"] = b
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Every parameter and running statistic, by name."""
        out = {k: p.data for k, p in self.parameters().items()}
        out.update(self.buffers())
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        for name, p in params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: expected shape {p.shape}, got {arr.shape}")
            p.data = arr.copy()
        for s in self.slots:
            if isinstance(s.norm, BatchNorm):
                s.norm.running_mean = np.asarray(arrays[f"{s.name}.norm.running_mean"], dtype=np.float64).copy()
                s.norm.running_var = np.asarray(arrays[f"{s.name}.norm.running_var"], dtype=np.float64).copy()

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def count_trainable_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    # -- evaluation -----------------------------------------------------------
    def _norm(self, slot: LayerSlot, h: T.Tensor, training: bool, update_stats: bool) -> T.Tensor:
        if slot.norm is None:
            return h
        return slot.norm.forward(h, training=training, update_stats=update_stats)

    def _run(self, clouds, training: bool, update_stats: bool, fuse_concat: bool, stop_at_global: bool = False):
        x = T.as_tensor(clouds)
        if x.ndim != 3 or x.shape[-1] != SPATIAL_DIM:
            raise DimensionError(f"expected point clouds of shape [B,N,{SPATIAL_DIM}], got {x.shape}")
        if self.config.norm == "layer" and x.shape[1] != self.config.n_points:
            raise DimensionError(
                f"layer-norm model is fixed to N={self.config.n_points} points, got {x.shape[1]}"
            )
        n_local = len(LOCAL_WIDTHS)
        n_enc = n_local + len(ENCODER_WIDTHS)
        h = x
        local = None
        for i, slot in enumerate(self.slots):
            if i == n_enc:
                global_feat = T.max_over_points(h)
                if stop_at_global:
                    return global_feat
                if fuse_concat:
                    h = slot.layer.forward_split(local, global_feat)
                else:
                    h = slot.layer(T.concat_channels(local, T.expand_points(global_feat, x.shape[1])))
            else:
                h = slot.layer(h)
            h = self._norm(slot, h, training, update_stats)
            if i == n_local - 1:
                local = h
        return h

    def forward(self, clouds, training: bool = False, update_stats: bool = True, fuse_concat: bool = True) -> T.Tensor:
        """Per-point predictions [B,N,n_cfd] of the scaled fields.

        ``fuse_concat`` evaluates the first decoder layer on the global
        feature once per cloud instead of on the broadcast concatenation;
        both paths give the same values.
        """
        return self._run(clouds, training, update_stats, fuse_concat)

    __call__ = forward

    def global_feature(self, cloud) -> np.ndarray:
        """Max-pooled geometry code (infer mode) of a single cloud [1,N,2] or [N,2]."""
        arr = cloud.data if isinstance(cloud, T.Tensor) else np.asarray(cloud, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        with T.no_grad():
            g = self._run(T.Tensor(arr), training=False, update_stats=False, fuse_concat=True, stop_at_global=True)
        return g.data[0]

    def predict(self, clouds: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Infer-mode forward on a numpy array, without recording a tape."""
        clouds = np.asarray(clouds, dtype=np.float64)
        outs = []
        with T.no_grad():
            for start in range(0, clouds.shape[0], batch_size):
                outs.append(self.forward(T.Tensor(clouds[start : start + batch_size])).data)
        return np.concatenate(outs, axis=0)


def build_model(config: ModelConfig) -> Model:
    """Instantiate every layer with deterministic initialization from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    dims = config.layer_dims()
    slots = []
    for idx, (name, d_in, d_out) in enumerate(dims):
        last = idx == len(dims) - 1
        if config.mode == "KAN":
            layer = KanLayer(d_in, d_out, config.basis, rng=rng)
        else:
            layer = MlpLayer(d_in, d_out, activation="sigmoid" if last else "relu", rng=rng)
        norm = None
        if not last:
            if config.norm == "batch":
                norm = BatchNorm(d_out)
            elif config.norm == "layer":
                norm = LayerNorm(config.n_points, d_out)
        slots.append(LayerSlot(name, layer, norm))
    return Model(config, slots)


def forward(model: Model, clouds, mode: str = "infer") -> T.Tensor:
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    return model.forward(clouds, training=(mode == "train"))


def count_trainable_parameters(model: Model) -> int:
    return model.count_trainable_parameters()


def global_feature(model: Model, cloud) -> np.ndarray:
    return model.global_feature(cloud)
