"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

A Tensor wraps an ndarray plus an optional gradient and the closure that
propagates its output gradient to its parents. backward() runs the recorded
graph in reverse topological order. Everything is 64-bit; the engine exists to
pass tight finite-difference checks, not to be fast on big models.

Inference-only code paths wrap themselves in `with no_grad():`, which skips
graph construction entirely.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Accumulate gradients of self w.r.t. every requires_grad ancestor."""
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without seed needs a scalar output")
            seed = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.asarray(seed, dtype=np.float64)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)
        # Free intermediate gradients; leaves keep theirs.
        for node in topo:
            if node._backward_fn is not None and node is not self:
                node.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _accumulate(node: Tensor, g: np.ndarray) -> None:
    # Gradient arrays are never mutated in place, so aliasing g is safe.
    node.grad = g if node.grad is None else node.grad + g


def _make(data, parents, backward_fn) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; batched inputs must share leading dimensions."""
    out_data = a.data @ b.data

    def backward_fn(g):
        _accumulate(a, g @ np.swapaxes(b.data, -1, -2))
        _accumulate(b, np.swapaxes(a.data, -1, -2) @ g)

    return _make(out_data, (a, b), backward_fn)


def power(a: Tensor, exponent: float) -> Tensor:
    out_data = a.data ** exponent

    def backward_fn(g):
        _accumulate(a, g * exponent * a.data ** (exponent - 1.0))

    return _make(out_data, (a,), backward_fn)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward_fn(g):
        _accumulate(a, g * out_data)

    return _make(out_data, (a,), backward_fn)


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def backward_fn(g):
        _accumulate(a, g / a.data)

    return _make(out_data, (a,), backward_fn)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward_fn(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward_fn)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def backward_fn(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward_fn)


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), computed stably for large |x|."""
    x = a.data
    out_data = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)

    def backward_fn(g):
        _accumulate(a, g / (1.0 + np.exp(-x)))

    return _make(out_data, (a,), backward_fn)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Tensor) -> Tensor:
    """tanh-approximated GELU; smooth, so finite-difference checks stay tight."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def backward_fn(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        _accumulate(a, g * local)

    return _make(out_data, (a,), backward_fn)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(out_data, (a,), backward_fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def max_(a: Tensor, axis: int) -> Tensor:
    """Max over one axis; gradient flows to the first argmax on ties."""
    out_data = a.data.max(axis=axis)
    idx = a.data.argmax(axis=axis)

    def backward_fn(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(
            ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis
        )
        _accumulate(a, ga)

    return _make(out_data, (a,), backward_fn)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(a, out_data * (g - dot))

    return _make(out_data, (a,), backward_fn)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - log_z

    def backward_fn(g):
        soft = np.exp(out_data)
        _accumulate(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out_data, (a,), backward_fn)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    out_data = x_hat * gain.data + bias.data

    def backward_fn(g):
        n = a.data.shape[-1]
        g_hat = g * gain.data
        term = g_hat - g_hat.mean(axis=-1, keepdims=True) \
            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        _accumulate(a, term * inv_std)
        _accumulate(gain, _unbroadcast(g * x_hat, gain.data.shape))
        _accumulate(bias, _unbroadcast(g, bias.data.shape))

    return _make(out_data, (a, gain, bias), backward_fn)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp)
    out_data = weight.data[ids]

    def backward_fn(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids, g)
        _accumulate(weight, gw)

    return _make(out_data, (weight,), backward_fn)


def take_rows(a: Tensor, idx) -> Tensor:
    """Select rows (first axis); supports slices and index arrays."""
    if isinstance(idx, slice):
        idx = np.arange(*idx.indices(a.data.shape[0]))
    idx = np.asarray(idx, dtype=np.intp)
    out_data = a.data[idx]

    def backward_fn(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        _accumulate(a, ga)

    return _make(out_data, (a,), backward_fn)


def take_pairs(a: Tensor, rows, cols) -> Tensor:
    """a[rows[i], cols[i]] for each i; a is 2-d."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out_data = a.data[rows, cols]

    def backward_fn(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (rows, cols), g)
        _accumulate(a, ga)

    return _make(out_data, (a,), backward_fn)


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)
    original = a.data.shape

    def backward_fn(g):
        _accumulate(a, g.reshape(original))

    return _make(out_data, (a,), backward_fn)


def transpose(a: Tensor, axes) -> Tensor:
    out_data = a.data.transpose(axes)
    inverse = np.argsort(axes)

    def backward_fn(g):
        _accumulate(a, g.transpose(inverse))

    return _make(out_data, (a,), backward_fn)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; on ties the gradient goes to the first argument."""
    take_a = a.data <= b.data
    out_data = np.where(take_a, a.data, b.data)

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g * take_a, a.data.shape))
        _accumulate(b, _unbroadcast(g * ~take_a, b.data.shape))

    return _make(out_data, (a, b), backward_fn)


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp values; the gradient passes through only strictly inside the range."""
    out_data = np.clip(a.data, low, high)
    inside = (a.data > low) & (a.data < high)

    def backward_fn(g):
        _accumulate(a, g * inside)

    return _make(out_data, (a,), backward_fn)


def stack(tensors: list[Tensor]) -> Tensor:
    out_data = np.stack([t.data for t in tensors])

    def backward_fn(g):
        for i, t in enumerate(tensors):
            _accumulate(t, g[i])

    return _make(out_data, tuple(tensors), backward_fn)


def numeric_gradient(fn, param: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar fn() w.r.t. param, elementwise."""
    def value() -> float:
        out = fn()
        return float(out.data if isinstance(out, Tensor) else out)

    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = value()
            flat[i] = keep - h
            down = value()
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * h)
    return grad


def gradient_check(fn, params: list[Tensor], h: float = 1e-5, floor: float = 1e-3) -> float:
    """Max relative error between analytic and numeric gradients of scalar fn.

    Relative error uses max(|analytic|, |numeric|, floor) in the denominator so
    near-zero entries are compared at an absolute tolerance of tol * floor.
    """
    for p in params:
        p.grad = None
    out = fn()
    out.backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_gradient(fn, p, h=h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
        p.grad = None
    return worst
