"""Reverse-mode automatic differentiation over dense float64 arrays.

Every op that touches a tensor with ``requires_grad`` records a node carrying
a monotone sequence number. ``backward`` walks the recorded ancestors of the
loss in strictly decreasing sequence order, i.e. the exact reverse of the
order in which the forward ops ran.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "DomainError",
    "BackwardError",
    "no_grad",
    "is_grad_enabled",
    "tensor",
    "constant",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "sum",
    "mean",
    "concat_last_axis",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "log",
    "max_with_zero",
    "clip",
    "forward_op",
    "backward",
    "grad_check",
    "check_parameter_gradients",
]


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class BackwardError(RuntimeError):
    pass


_seq = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Run ops without recording them (evaluation, message production)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("values", "requires_grad", "grad", "_parents", "_vjp", "_seq", "_op")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64)
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None
        self._seq = -1
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_recorded(self) -> bool:
        return self._vjp is not None

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.values.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(values, requires_grad: bool = False) -> Tensor:
    return Tensor(values, requires_grad=requires_grad)


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out_values: np.ndarray, parents: Sequence[Tensor], vjp, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.values = out_values
    out.grad = None
    out._op = op
    out._seq = -1
    out._parents = ()
    out._vjp = None
    out.requires_grad = False
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
        out._seq = next(_seq)
    return out


def _broadcast_kind(a: np.ndarray, b: np.ndarray, op: str) -> None:
    # Allowed: identical shapes, a 0-d scalar, or one operand lacking only the leading batch axis.
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    if a.ndim == b.ndim + 1 and a.shape[1:] == b.shape:
        return
    if b.ndim == a.ndim + 1 and b.shape[1:] == a.shape:
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.asarray(g.sum())
    return g.sum(axis=0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.values, b.values
    # einsum keeps each output row independent of the batch size (BLAS does not).
    out = np.einsum("ij,jk->ik", av, bv)

    def vjp(g):
        return g @ bv.T, av.T @ g

    return _record(out, (a, b), vjp, "matmul")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_kind(a.values, b.values, "add")
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _record(a.values + b.values, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_kind(a.values, b.values, "sub")
    sa, sb = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _record(a.values - b.values, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_kind(a.values, b.values, "mul")
    av, bv = a.values, b.values

    def vjp(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _record(av * bv, (a, b), vjp, "mul")


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _record(-a.values, (a,), lambda g: (-g,), "neg")


def sum(a) -> Tensor:  # noqa: A001 - mirrors the op name
    a = _as_tensor(a)
    shape = a.shape

    def vjp(g):
        return (np.broadcast_to(g, shape).copy(),)

    return _record(np.asarray(a.values.sum()), (a,), vjp, "sum")


def mean(a) -> Tensor:
    a = _as_tensor(a)
    shape, n = a.shape, a.size

    def vjp(g):
        return (np.full(shape, float(g) / n),)

    return _record(np.asarray(a.values.mean()), (a,), vjp, "mean")


def concat_last_axis(parts: Sequence[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_last_axis: no operands")
    lead = parts[0].shape[:-1]
    for p in parts:
        if p.values.ndim == 0 or p.shape[:-1] != lead:
            raise ShapeError(f"concat_last_axis: incompatible shapes {[q.shape for q in parts]}")
    widths = [p.shape[-1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    out = np.concatenate([p.values for p in parts], axis=-1)
    return _record(out, tuple(parts), vjp, "concat_last_axis")


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.values > 0
    return _record(np.where(mask, a.values, 0.0), (a,), lambda g: (g * mask,), "relu")


def max_with_zero(a) -> Tensor:
    """Elementwise max(x, 0); the subgradient at exactly 0 is 0."""
    a = _as_tensor(a)
    mask = a.values > 0
    return _record(np.where(mask, a.values, 0.0), (a,), lambda g: (g * mask,), "max_with_zero")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _as_tensor(a)
    x = a.values
    mask = x > 0
    out = np.where(mask, x, slope * x)
    return _record(out, (a,), lambda g: (np.where(mask, g, slope * g),), "leaky_relu")


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.values)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    x = a.values
    ex = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def log(a) -> Tensor:
    a = _as_tensor(a)
    x = a.values
    if not np.all(x > 0):
        bad = x[~(x > 0)].ravel()[0]
        raise DomainError(f"log: operand must be strictly positive, got {bad!r}")
    return _record(np.log(x), (a,), lambda g: (g / x,), "log")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only where the input was inside."""
    a = _as_tensor(a)
    x = a.values
    inside = (x >= lo) & (x <= hi)
    return _record(np.clip(x, lo, hi), (a,), lambda g: (g * inside,), "clip")


_OPS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "neg": neg,
    "sum": sum,
    "mean": mean,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "log": log,
    "max_with_zero": max_with_zero,
}


def forward_op(op_kind: str, operands: Sequence[Tensor], **kwargs) -> Tensor:
    """Dispatch an op by name, e.g. ``forward_op("leaky_relu", [x], slope=0.2)``."""
    if op_kind == "concat_last_axis":
        return concat_last_axis(operands)
    if op_kind == "leaky_relu":
        return leaky_relu(operands[0], **kwargs)
    try:
        fn = _OPS[op_kind]
    except KeyError:
        raise ValueError(f"unknown op {op_kind!r}") from None
    return fn(*operands, **kwargs)


def backward(loss: Tensor) -> None:
    if loss.size != 1:
        raise BackwardError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise BackwardError("loss is not attached to any recorded computation")

    # Collect recorded ancestors; leaves need no ordering.
    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in nodes or not t.requires_grad:
            continue
        nodes[id(t)] = t
        stack.extend(t._parents)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    recorded = sorted((t for t in nodes.values() if t.is_recorded), key=lambda t: t._seq, reverse=True)
    for t in recorded:
        g = grads.pop(id(t), None)
        if g is None:
            continue
        t.grad = g
        for parent, pg in zip(t._parents, t._vjp(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else np.array(pg, dtype=np.float64)

    for t in nodes.values():
        if t.is_recorded:
            continue
        g = grads.get(id(t))
        if g is None:
            continue
        t.grad = g.copy() if t.grad is None else t.grad + g


def grad_check(f: Callable[[Tensor], Tensor], point: Tensor, eps: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |central difference|)."""
    x = Tensor(point.values.copy(), requires_grad=True)
    backward(f(x))
    analytic = x.grad if x.grad is not None else np.zeros_like(x.values)
    probe = Tensor(point.values.copy())
    with no_grad():
        numeric = _central_differences(lambda: f(probe).item(), probe, eps)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def _central_differences(f: Callable[[], float], param: Tensor, eps: float) -> np.ndarray:
    flat = param.values.reshape(-1)
    out = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = f()
        flat[i] = orig - eps
        minus = f()
        flat[i] = orig
        out[i] = (plus - minus) / (2 * eps)
    return out.reshape(param.shape)


def check_parameter_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Same error measure as :func:`grad_check`, taken over every entry of every parameter.

    ``loss_fn`` must rebuild the loss from the current parameter values on each call.
    """
    for p in params:
        p.grad = None
    backward(loss_fn())
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.values) for p in params]
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            numeric = _central_differences(lambda: loss_fn().item(), p, eps)
            err = np.abs(a - numeric) / np.maximum(1.0, np.abs(numeric))
            worst = max(worst, float(err.max()))
    for p in params:
        p.grad = None
    return worst
