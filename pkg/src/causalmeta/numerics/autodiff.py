"""Reverse-mode automatic differentiation over numpy arrays.

Every operation on :class:`Tensor` records its parents together with a
vector-Jacobian product closure. Calling :func:`backward` on a scalar output
walks that graph in reverse topological order. The graph lives only as long
as the tensors referencing it, so it is rebuilt on every forward pass.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import GraphError, NumericError

_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


class Tensor:
    """A float64 array node in a recorded computation."""

    __slots__ = ("data", "parents", "requires_grad", "name")
    __array_priority__ = 1000  # make ndarray + Tensor dispatch to Tensor.__radd__

    def __init__(self, data, parents: Sequence[tuple["Tensor", Callable]] = (),
                 requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = tuple(parents)
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in self.parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        label = f"{self.name}, " if self.name else ""
        return f"Tensor({label}shape={self.shape})"

    def item(self) -> float:
        return float(self.data)

    # arithmetic
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def leaf(data, name: str | None = None) -> Tensor:
    """A differentiable input node (a parameter or a watched input)."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, *parents: tuple[Tensor, Callable]) -> Tensor:
    live = [(p, fn) for p, fn in parents if p.requires_grad]
    return Tensor(data, live)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# elementwise binary ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data,
                 (a, lambda g: _unbroadcast(g, a.shape)),
                 (b, lambda g: _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data,
                 (a, lambda g: _unbroadcast(g, a.shape)),
                 (b, lambda g: _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data,
                 (a, lambda g: _unbroadcast(g * b.data, a.shape)),
                 (b, lambda g: _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _node(out,
                 (a, lambda g: _unbroadcast(g / b.data, a.shape)),
                 (b, lambda g: _unbroadcast(-g * out / b.data, b.shape)))


def power(a: Tensor, exponent: float) -> Tensor:
    a = as_tensor(a)
    return _node(a.data ** exponent,
                 (a, lambda g: g * exponent * a.data ** (exponent - 1)))


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _node(a.data * a.data, (a, lambda g: 2.0 * g * a.data))


# elementwise unary ops

def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a, lambda g: g * out))


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a, lambda g: g / a.data))


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a, lambda g: g * (1.0 - out * out)))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a, lambda g: g * out * (1.0 - out)))


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(a.data * mask, (a, lambda g: g * mask))


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope)
    return _node(a.data * scale, (a, lambda g: g * scale))


def gelu(a: Tensor) -> Tensor:
    """Tanh approximation of GELU; smooth, so finite differences behave."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    th = np.tanh(_SQRT_2_OVER_PI * x * (1.0 + 0.044715 * x2))
    half = 0.5 * (1.0 + th)
    out = x * half

    def vjp(g):
        dinner = _SQRT_2_OVER_PI * (1.0 + 3 * 0.044715 * x2)
        return g * (half + 0.5 * x * (1.0 - th * th) * dinner)

    return _node(out, (a, vjp))


# reductions and shape ops

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape)

    return _node(out, (a, vjp))


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a, lambda g: g.reshape(a.shape)))


def transpose(a: Tensor, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), (a, lambda g: g.transpose(inverse)))


def getitem(a: Tensor, index) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros(a.shape)
        np.add.at(out, index, g)
        return out

    return _node(a.data[index], (a, vjp))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])
    parents = []
    for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
        def vjp(g, lo=lo, hi=hi):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]
        parents.append((t, vjp))
    return _node(out, *parents)


def broadcast_to(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    return _node(np.broadcast_to(a.data, shape).copy(), (a, lambda g: _unbroadcast(g, a.shape)))


# linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects operands with at least two dimensions")
    out = a.data @ b.data

    def vjp_a(g):
        return _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)

    def vjp_b(g):
        if a.ndim > 2 and b.ndim == 2:
            # fold batch dims into one matmul instead of a broadcast-then-sum
            a2 = a.data.reshape(-1, a.shape[-1])
            return a2.T @ g.reshape(-1, g.shape[-1])
        return _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)

    return _node(out, (a, vjp_a), (b, vjp_b))


# fused normalisation ops

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return out * (g - (g * out).sum(axis=axis, keepdims=True))

    return _node(out, (a, vjp))


def layer_norm(a: Tensor, gain: Tensor, offset: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale by ``gain`` and shift by ``offset``."""
    a, gain, offset = as_tensor(a), as_tensor(gain), as_tensor(offset)
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gain.data + offset.data

    def vjp_a(g):
        gx = g * gain.data
        return inv * (gx - gx.mean(axis=-1, keepdims=True)
                      - xhat * (gx * xhat).mean(axis=-1, keepdims=True))

    return _node(out,
                 (a, vjp_a),
                 (gain, lambda g: _unbroadcast(g * xhat, gain.shape)),
                 (offset, lambda g: _unbroadcast(g, offset.shape)))


# reverse pass

def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def grad(output: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``output`` with respect to each tensor in ``wrt``."""
    wrt = list(wrt)
    if not isinstance(output, Tensor):
        raise GraphError("output was not produced by a recorded computation")
    if output.data.size != 1:
        raise GraphError(f"backward needs a scalar output, got shape {output.shape}")
    for t in wrt:
        if not isinstance(t, Tensor) or not t.requires_grad:
            raise GraphError(f"{t!r} is not a recorded leaf")
    if not np.isfinite(output.data).all():
        raise NumericError("non-finite output in backward")
    keep = {id(t) for t in wrt}
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    if output.requires_grad:
        for node in reversed(_topological_order(output)):
            g = grads.get(id(node)) if id(node) in keep else grads.pop(id(node), None)
            if g is None:
                continue
            for parent, vjp in node.parents:
                contrib = vjp(g)
                prev = grads.get(id(parent))
                grads[id(parent)] = contrib if prev is None else prev + contrib
    return [np.array(grads.get(id(t), np.zeros(t.shape)), dtype=np.float64).reshape(t.shape)
            for t in wrt]


def backward(output: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradient tree with the same names as ``params``."""
    names = list(params)
    return dict(zip(names, grad(output, [params[n] for n in names])))
