"""Dense float64 tensors with a dynamic reverse-mode tape.

Only the operations the two point-cloud architectures need are provided.
Every op records a closure mapping the upstream gradient to one gradient per
parent; :func:`backward` walks the recorded graph once in reverse topological
order and then releases it.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError, UsageError

_grad_enabled = True
_checked = False
_branch_log: list | None = None

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def checked_mode(enabled: bool = True):
    """Reject NaN/Inf at every op boundary while active."""
    global _checked
    prev, _checked = _checked, enabled
    try:
        yield
    finally:
        _checked = prev


def is_checked() -> bool:
    return _checked


@contextlib.contextmanager
def record_branches():
    """Collect the discrete decisions (relu masks, max argmax) taken by ops.

    Used by the gradient checker to reject probes that cross a kink.
    """
    global _branch_log
    prev, _branch_log = _branch_log, []
    try:
        yield _branch_log
    finally:
        _branch_log = prev


def _log_branch(arr: np.ndarray) -> None:
    if _branch_log is not None:
        _branch_log.append(np.array(arr, copy=True))


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op!r}")


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if any(s <= 0 for s in arr.shape):
            raise DimensionError(f"tensor extents must be positive, got {arr.shape}")
        if _checked:
            _check_finite(arr, "leaf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._consumed = False

    # -- construction helpers -------------------------------------------------
    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple["Tensor", ...], backward: BackwardFn, op: str) -> "Tensor":
        if _checked:
            _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        out._consumed = False
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        if out.requires_grad:
            for p in parents:
                if p._consumed:
                    raise UsageError("graph was already consumed by a previous backward()")
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- introspection --------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError("item() requires a single-element tensor")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # -- operators ------------------------------------------------------------
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_scalar(self, -other)

    def __rsub__(self, other):
        return add_scalar(mul_scalar(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else mul_scalar(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def square(self):
        return square(self)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    """Register a fused operation whose backward is supplied by the caller."""
    return Tensor._result(data, tuple(parents), backward_fn, op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- binary / scalar arithmetic -----------------------------------------------

def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from exc


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor._result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor._result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return Tensor._result(
        ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul"
    )


def add_scalar(x: Tensor, c: float) -> Tensor:
    return Tensor._result(x.data + float(c), (x,), lambda g: (g,), "add_scalar")


def mul_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._result(x.data * c, (x,), lambda g: (g * c,), "mul_scalar")


# -- elementwise nonlinearities -----------------------------------------------

def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return Tensor._result(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0  # relu'(0) = 0
    _log_branch(mask)
    return Tensor._result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))  # overflow-free logistic
    return Tensor._result(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def square(x: Tensor) -> Tensor:
    d = x.data
    return Tensor._result(d * d, (x,), lambda g: (2.0 * g * d,), "square")


ELEMENTWISE = {
    "tanh": tanh,
    "relu": relu,
    "sigmoid": sigmoid,
    "square": square,
}


def elementwise(x: Tensor, f: str, c: float | None = None) -> Tensor:
    """Dispatch by name: tanh, relu, sigmoid, square, add-scalar, mul-scalar."""
    if f == "add-scalar":
        return add_scalar(x, c)
    if f == "mul-scalar":
        return mul_scalar(x, c)
    try:
        return ELEMENTWISE[f](x)
    except KeyError:
        raise UsageError(f"unknown elementwise function {f!r}") from None


# -- reductions and shape ops -------------------------------------------------

def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return Tensor._result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul_scalar(tsum(x, axis, keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {old} to {shape}") from exc
    return Tensor._result(data, (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor._result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),), "transpose")


def getitem(x: Tensor, index) -> Tensor:
    shape = x.shape

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(i, (slice, int, type(Ellipsis))) or i is None for i in parts)

    def bw(g):
        full = np.zeros(shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor._result(np.array(x.data[index]), (x,), bw, "getitem")


def stack(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack needs equal shapes, got {sorted(shapes)}")
    data = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._result(data, tensors, bw, "stack")


def expand_points(g: Tensor, n_points: int) -> Tensor:
    """Broadcast a per-cloud vector [B,C] to every point: [B,N,C]."""
    if g.ndim != 2:
        raise DimensionError(f"expand_points expects [B,C], got {g.shape}")
    b, c = g.shape
    data = np.broadcast_to(g.data[:, None, :], (b, n_points, c))
    return Tensor._result(data, (g,), lambda gr: (gr.sum(axis=1),), "expand_points")


# -- architecture primitives --------------------------------------------------

def contract(a: Tensor, w: Tensor) -> Tensor:
    """out[..., k] = sum_j w[k, j] * a[..., j]."""
    if w.ndim != 2 or a.ndim < 1 or a.shape[-1] != w.shape[1]:
        raise DimensionError(f"contract: input {a.shape} incompatible with weights {w.shape}")
    ad, wd = a.data, w.data
    d_in = wd.shape[1]

    need_a = a.requires_grad

    def bw(g):
        ga = g @ wd if need_a else None
        gw = g.reshape(-1, g.shape[-1]).T @ ad.reshape(-1, d_in)
        return ga, gw

    return Tensor._result(ad @ wd.T, (a, w), bw, "contract")


def max_over_points(x: Tensor) -> Tensor:
    """Channel-wise max over the point axis of [B,N,C]; ties go to the lowest index."""
    if x.ndim != 3:
        raise DimensionError(f"max_over_points expects [B,N,C], got {x.shape}")
    idx = np.argmax(x.data, axis=1)  # first occurrence on ties
    _log_branch(idx)
    out = np.take_along_axis(x.data, idx[:, None, :], axis=1)[:, 0, :]
    shape = x.shape

    def bw(g):
        full = np.zeros(shape)
        np.put_along_axis(full, idx[:, None, :], g[:, None, :], axis=1)
        return (full,)

    return Tensor._result(out, (x,), bw, "max_over_points")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != b.ndim or a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"concat_channels: leading extents differ, {a.shape} vs {b.shape}")
    c1 = a.shape[-1]
    data = np.concatenate([a.data, b.data], axis=-1)
    return Tensor._result(data, (a, b), lambda g: (g[..., :c1], g[..., c1:]), "concat_channels")


# -- reverse sweep ------------------------------------------------------------

def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` and release the graph."""
    if loss.data.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise UsageError("graph already consumed; run a new forward pass")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any tensor requiring grad")
    order = _topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if node._consumed:
                raise UsageError("graph already consumed; run a new forward pass")
            if g is not None:
                g = np.array(g, copy=True)
                node.grad = g if node.grad is None else node.grad + g
            continue
        if g is not None:
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg
        node._parents = ()
        node._backward = None
        node._consumed = True
