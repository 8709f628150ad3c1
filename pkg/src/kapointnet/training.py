"""Loss, Adam, the mini-batch loop with early stopping, and gradient checking."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, KaPointNetError, NonFiniteError

log = logging.getLogger(__name__)


class TrainingDiverged(KaPointNetError, FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


def mse_loss(pred: T.Tensor, target) -> T.Tensor:
    """Mean of all squared residuals over batch, points and fields."""
    target = T.as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    return T.mean(T.square(pred - target))


# -- Adam -----------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, T.Tensor], grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    if T.is_checked():
        for name, g in grads.items():
            if g is not None and not np.all(np.isfinite(g)):
                bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
                raise NonFiniteError(f"gradient of {name!r} has {bad} non-finite entries at step {state.t + 1}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        p.data = p.data - state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps_hat)


class Adam:
    def __init__(self, params: Mapping[str, T.Tensor], lr=5e-4, beta1=0.9, beta2=0.999, eps_hat=1e-8):
        self.params = dict(params)
        self.state = AdamState(lr, beta1, beta2, eps_hat)

    def step(self) -> None:
        adam_step(self.params, {k: p.grad for k, p in self.params.items()}, self.state)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.state.m:
            out[f"adam.m.{k}"] = self.state.m[k]
            out[f"adam.v.{k}"] = self.state.v[k]
        return out

    def hyper(self) -> dict:
        s = self.state
        return {"lr": s.lr, "beta1": s.beta1, "beta2": s.beta2, "eps_hat": s.eps_hat, "t": s.t}

    def load(self, hyper: dict, arrays: Mapping[str, np.ndarray]) -> None:
        s = self.state
        s.lr, s.beta1, s.beta2, s.eps_hat, s.t = (
            hyper["lr"], hyper["beta1"], hyper["beta2"], hyper["eps_hat"], int(hyper["t"])
        )
        s.m = {k[len("adam.m."):]: np.array(a) for k, a in arrays.items() if k.startswith("adam.m.")}
        s.v = {k[len("adam.v."):]: np.array(a) for k, a in arrays.items() if k.startswith("adam.v.")}

    def snapshot(self):
        s = self.state
        return s.t, {k: a.copy() for k, a in s.m.items()}, {k: a.copy() for k, a in s.v.items()}

    def restore(self, snap) -> None:
        self.state.t, self.state.m, self.state.v = snap[0], dict(snap[1]), dict(snap[2])


# -- training loop ----------------------------------------------------------------

@dataclass
class TrainConfig:
    batch_size: int = 128
    lr: float = 5e-4
    max_epochs: int = 1000
    patience: int = 100
    min_delta: float = 1e-6
    seed: int = 0
    log_every: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    def __post_init__(self):
        if int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if int(self.patience) < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if int(self.max_epochs) < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    initial_train_loss: float | None = None
    best_epoch: int | None = None
    best_val_loss: float | None = None
    stop_reason: str = "not_started"

    @property
    def best_train_loss(self) -> float | None:
        if self.best_epoch is None:
            return None
        return self.train_loss[self.epochs.index(self.best_epoch)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            for row in zip(self.epochs, self.train_loss, self.val_loss, self.seconds):
                w.writerow([row[0], repr(row[1]), repr(row[2]), f"{row[3]:.6f}"])


@dataclass
class TrainResult:
    model: object
    optimizer: Adam
    history: TrainHistory


def evaluate_loss(model, x: np.ndarray, y: np.ndarray, batch_size: int) -> float:
    """Infer-mode loss over a split; never touches batch-norm statistics."""
    total = 0.0
    with T.no_grad():
        for start in range(0, x.shape[0], batch_size):
            xb, yb = x[start : start + batch_size], y[start : start + batch_size]
            pred = model.forward(T.Tensor(xb), training=False)
            total += float(np.sum((pred.data - yb) ** 2))
    return total / y.size


def train(model, train_data, val_data, config: TrainConfig, optimizer: Adam | None = None,
          on_epoch: Callable[[int, float, float], None] | None = None) -> TrainResult:
    """Mini-batch Adam with per-epoch validation and early stopping.

    ``train_data`` / ``val_data`` are ``(x [m,N,2], y [m,N,3])`` arrays that
    are already scaled. Batches are reshuffled each epoch from ``config.seed``
    and the last short batch is kept. On return the model holds the
    parameters (and running statistics) of the best validation epoch.
    """
    x_tr, y_tr = (np.asarray(a, dtype=np.float64) for a in train_data)
    x_va, y_va = (np.asarray(a, dtype=np.float64) for a in val_data)
    params = model.parameters()
    if optimizer is None:
        optimizer = Adam(params, config.lr, config.beta1, config.beta2, config.eps_hat)
    history = TrainHistory()
    if config.max_epochs == 0:
        history.stop_reason = "max_epochs"
        return TrainResult(model, optimizer, history)

    rng = np.random.default_rng(config.seed)
    m = x_tr.shape[0]
    bs = int(config.batch_size)
    history.initial_train_loss = evaluate_loss(model, x_tr, y_tr, bs)
    best_val = np.inf
    best_state = None
    wait = 0
    history.stop_reason = "max_epochs"
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(m)
        running = 0.0
        for start in range(0, m, bs):
            idx = perm[start : start + bs]
            optimizer.zero_grad()
            loss = mse_loss(model.forward(T.Tensor(x_tr[idx]), training=True), y_tr[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, value)
            loss.backward()
            optimizer.step()
            running += value * idx.size
        train_loss = running / m
        val_loss = evaluate_loss(model, x_va, y_va, bs)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(epoch, val_loss)
        history.epochs.append(epoch)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.seconds.append(time.perf_counter() - t0)
        if on_epoch is not None:
            on_epoch(epoch, train_loss, val_loss)
        if config.log_every and epoch % config.log_every == 0:
            log.info("epoch %d train %.6e val %.6e", epoch, train_loss, val_loss)

        if val_loss < best_val - config.min_delta:
            best_val = val_loss
            history.best_epoch = epoch
            history.best_val_loss = val_loss
            best_state = ({k: a.copy() for k, a in model.state_arrays().items()}, optimizer.snapshot())
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                history.stop_reason = "early_stopping"
                break

    if best_state is not None:
        model.load_state_arrays(best_state[0])
        optimizer.restore(best_state[1])
    return TrainResult(model, optimizer, history)


# -- gradient checking ------------------------------------------------------------

@dataclass
class Probe:
    name: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


def relative_error(a: float, b: float, floor: float) -> float:
    scale = max(abs(a), abs(b), floor)
    return 0.0 if scale == 0 else abs(a - b) / scale


def check_gradients(loss_fn: Callable[[], T.Tensor], params: Mapping[str, T.Tensor], n_probes: int,
                    step: float = 1e-5, seed=0, floor: float = 1e-4, max_attempts: int | None = None) -> list[Probe]:
    """Compare autodiff against central differences on randomly chosen scalars.

    ``loss_fn`` must rebuild the graph on every call. A probe whose +/- step
    evaluations take different discrete branches (relu masks, max argmax)
    than the unperturbed point straddles a kink and is redrawn. Relative
    errors use ``max(|a|, |n|, floor)`` in the denominator so that gradients
    at rounding level do not dominate.
    """
    names = list(params)
    sizes = np.array([params[k].size for k in names])
    for p in params.values():
        p.grad = None
    with T.record_branches() as base_branches:
        loss = loss_fn()
    loss.backward()
    grads = {k: (params[k].grad if params[k].grad is not None else np.zeros(params[k].shape)) for k in names}

    def value_and_branches():
        with T.no_grad(), T.record_branches() as br:
            v = loss_fn().item()
        return v, br

    def same(br):
        return len(br) == len(base_branches) and all(np.array_equal(a, b) for a, b in zip(br, base_branches))

    rng = np.random.default_rng(seed)
    probes: list[Probe] = []
    attempts = 0
    limit = max_attempts if max_attempts is not None else 20 * n_probes
    while len(probes) < n_probes and attempts < limit:
        attempts += 1
        which = rng.choice(len(names), p=sizes / sizes.sum())
        name = names[which]
        p = params[name]
        flat = int(rng.integers(p.size))
        index = np.unravel_index(flat, p.shape)
        original = p.data[index]
        data = p.data.copy()
        data[index] = original + step
        p.data = data
        plus, br_plus = value_and_branches()
        data = data.copy()
        data[index] = original - step
        p.data = data
        minus, br_minus = value_and_branches()
        data = data.copy()
        data[index] = original
        p.data = data
        if not (same(br_plus) and same(br_minus)):
            continue
        numeric = (plus - minus) / (2.0 * step)
        analytic = float(grads[name][index])
        probes.append(Probe(name, tuple(int(i) for i in index), analytic, numeric,
                            relative_error(analytic, numeric, floor)))
    return probes


def gradient_check(model, batch, n_probes: int = 50, step: float = 1e-5, seed=0, training: bool = True,
                   floor: float = 1e-4) -> float:
    """Max relative error of d(mse)/d(parameter) over random probes.

    Train-mode probes use batch statistics without updating the running
    estimates, so the check leaves the model unchanged.
    """
    x, y = batch
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def loss_fn():
        return mse_loss(model.forward(T.Tensor(x), training=training, update_stats=False), y)

    probes = check_gradients(loss_fn, model.parameters(), n_probes, step, seed, floor)
    model.zero_grad()
    if len(probes) < n_probes:
        raise KaPointNetError(f"only {len(probes)} of {n_probes} probes avoided kinks")
    return max(p.rel_error for p in probes)
