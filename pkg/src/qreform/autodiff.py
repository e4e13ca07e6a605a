"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every operation builds a graph node holding its parents and a closure that
maps the output gradient to parent gradients. `Tensor.backward()` walks the
graph in reverse topological order. Gradients are exact (no approximations),
so they can be validated against central finite differences.
"""

from __future__ import annotations

import numpy as np


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        """A graph-free copy sharing no history (used to stop gradient flow)."""
        return Tensor(self.data.copy())

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        for node in topo:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            for parent, grad in zip(node._parents, node._backward(node.grad)):
                if grad is None:
                    continue
                parent.grad = grad if parent.grad is None else parent.grad + grad

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = wrap(other)
        out_data = self.data + other.data
        a_shape, b_shape = self.shape, other.shape
        return Tensor(
            out_data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-wrap(other))

    def __rsub__(self, other):
        return wrap(other) + (-self)

    def __mul__(self, other):
        other = wrap(other)
        a, b = self, other
        return Tensor(
            a.data * b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = wrap(other)
        a, b = self, other
        return Tensor(
            a.data / b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
        )

    def __matmul__(self, other):
        other = wrap(other)
        a, b = self, other
        out = a.data @ b.data

        def bwd(g):
            if a.data.ndim == 1 and b.data.ndim == 1:
                return (g * b.data, g * a.data)
            if a.data.ndim == 2 and b.data.ndim == 2:
                return (g @ b.data.T, a.data.T @ g)
            if a.data.ndim == 2 and b.data.ndim == 1:
                return (np.outer(g, b.data), a.data.T @ g)
            if a.data.ndim == 1 and b.data.ndim == 2:
                return (b.data @ g, np.outer(a.data, g))
            raise ValueError(f"unsupported matmul ranks {a.data.ndim} @ {b.data.ndim}")

        return Tensor(out, (a, b), bwd)


def wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    out = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return Tensor(out, (x,), lambda g: (g * out * (1.0 - out),))


def log(x: Tensor) -> Tensor:
    return Tensor(np.log(x.data), (x,), lambda g: (g / x.data,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor(out, (x,), lambda g: (g * out,))


def tsum(x: Tensor, axis=None) -> Tensor:
    shape = x.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return Tensor(x.data.sum(axis=axis), (x,), bwd)


def tmean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    return tsum(x, axis=axis) * (1.0 / n)


def tmax(x: Tensor, axis: int) -> Tensor:
    """Max along an axis; gradient routes to the first argmax entry."""
    idx = np.argmax(x.data, axis=axis)
    out = np.max(x.data, axis=axis)

    def bwd(g):
        grad = np.zeros_like(x.data)
        np.put_along_axis(
            grad, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis
        )
        return (grad,)

    return Tensor(out, (x,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [wrap(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return Tensor(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def gather(x: Tensor, indices) -> Tensor:
    """Select rows (or scalars from a vector) by integer indices."""
    idx = np.asarray(indices, dtype=np.int64)

    def bwd(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, idx, g)
        return (grad,)

    return Tensor(x.data[idx], (x,), bwd)


def affine(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w (+ b) applied to the last axis; x may have any leading shape."""
    k, f = w.data.shape
    lead = x.data.shape[:-1]
    x2 = x.data.reshape(-1, k)
    out = x2 @ w.data
    if b is not None:
        out = out + b.data

    def bwd(g):
        g2 = g.reshape(-1, f)
        gx = (g2 @ w.data.T).reshape(x.data.shape)
        gw = x2.T @ g2
        if b is None:
            return (gx, gw)
        return (gx, gw, _unbroadcast(g2, b.data.shape))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor(out.reshape(*lead, f), parents, bwd)


def sliding_windows(x: Tensor, width: int) -> Tensor:
    """Zero-padded sliding windows along the second-to-last (time) axis.

    Input (..., T, d) maps to (..., T, width*d): position t holds the
    concatenated vectors of tokens t-r .. t+r for odd width = 2r+1.
    """
    if width % 2 != 1:
        raise ValueError(f"window width must be odd, got {width}")
    r = width // 2
    t_len = x.data.shape[-2]
    d = x.data.shape[-1]
    pad_spec = [(0, 0)] * (x.data.ndim - 2) + [(r, r), (0, 0)]
    padded = np.pad(x.data, pad_spec)
    pieces = [padded[..., off : off + t_len, :] for off in range(width)]
    out = np.concatenate(pieces, axis=-1)

    def bwd(g):
        grad_padded = np.zeros_like(padded)
        for off in range(width):
            grad_padded[..., off : off + t_len, :] += g[..., off * d : (off + 1) * d]
        if r == 0:
            return (grad_padded,)
        return (grad_padded[..., r:-r, :],)

    return Tensor(out, (x,), bwd)


def softmax(x: Tensor) -> Tensor:
    """Stable softmax of a 1-D tensor (max subtraction does not affect gradients)."""
    shifted = x - float(np.max(x.data))
    e = exp(shifted)
    return e / tsum(e)


def grad_check(loss_fn, params: dict[str, Tensor], epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_fn` must rebuild the loss graph from the current parameter values
    on every call. The relative error per entry is
    |g_a - g_n| / max(1e-8, |g_a| + |g_n|).
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in [1e-6, 1e-3], got {epsilon}")
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise ValueError("loss is not finite")
    # Parameters outside this loss's graph keep stale grads from earlier
    # backward passes otherwise.
    for p in params.values():
        p.grad = None
    loss.backward()
    analytic = {
        name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
        for name, p in params.items()
    }
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        ga_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn().item()
            flat[i] = orig - epsilon
            down = loss_fn().item()
            flat[i] = orig
            gn = (up - down) / (2.0 * epsilon)
            ga = ga_flat[i]
            worst = max(worst, abs(ga - gn) / max(1e-8, abs(ga) + abs(gn)))
    return worst
