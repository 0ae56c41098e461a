"""Minimal reverse-mode automatic differentiation over numpy arrays.

Exactly the operations the evaluator's model and losses need, nothing
more.  Every op builds a node in an acyclic graph; ``backward`` on a
scalar loss walks the graph in reverse topological order and accumulates
gradients into ``Tensor.grad``.

Dtype follows the arrays you pass in: build parameters in float32 for
training, float64 when running finite-difference checks.
"""

import numpy as np

from .errors import ContractViolation, NumericFailure

_nan_checks = False


def set_nan_checks(enabled: bool) -> None:
    """Toggle per-op finite-value checks (off by default; costs time)."""
    global _nan_checks
    _nan_checks = enabled


def _checked(out: np.ndarray, node: str) -> np.ndarray:
    if _nan_checks and not np.all(np.isfinite(out)):
        raise NumericFailure(node)
    return out


class Tensor:
    """A dense array with an optional gradient buffer and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad += g

    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor with requires_grad."""
        if self.data.shape != ():
            raise ContractViolation(
                f"backward() root must be a scalar, got shape {self.data.shape}"
            )
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones((), dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __rtruediv__(self, other):
        return mul(other, power(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    """Wrap a plain value as a constant tensor, matching ``like``'s dtype."""
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward, name: str) -> Tensor:
    out = Tensor(_checked(data, name))
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        grads_into = tuple(p for p in parents if p.requires_grad or p._parents)
        out._parents = grads_into
        out._backward = backward
    return out


def _sum_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reverse numpy broadcasting: reduce ``g`` back to ``shape``."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- arithmetic ---------------------------------------------------------

def add(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_sum_to_shape(g, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_sum_to_shape(g, b.data.shape))

    return _node(out_data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_sum_to_shape(g * b.data, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_sum_to_shape(g * a.data, b.data.shape))

    return _node(out_data, (a, b), backward, "mul")


def power(a: Tensor, exponent: float) -> Tensor:
    a = as_tensor(a)
    out_data = a.data ** exponent

    def backward(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1.0))

    return _node(out_data, (a,), backward, "power")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ContractViolation("matmul operands must have ndim >= 2")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_sum_to_shape(g @ b.data.swapaxes(-1, -2), a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_sum_to_shape(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    return _node(out_data, (a, b), backward, "matmul")


# -- shape ops ----------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    old_shape = a.data.shape
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(old_shape))

    return _node(out_data, (a,), backward, "reshape")


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    out_data = a.data.swapaxes(ax1, ax2)

    def backward(g):
        a._accumulate(g.swapaxes(ax1, ax2))

    # swapaxes returns a view; copy so downstream in-place grads are safe
    return _node(np.ascontiguousarray(out_data), (a,), backward, "swapaxes")


def take(a: Tensor, idx) -> Tensor:
    out_data = a.data[idx]

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        a._accumulate(buf)

    return _node(np.ascontiguousarray(out_data), (a,), backward, "take")


def concat(parts: list, axis: int = 0) -> Tensor:
    if not parts:
        raise ContractViolation("concat needs at least one tensor")
    parts = [p if isinstance(p, Tensor) else Tensor(np.asarray(p)) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad or p._parents:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, stop)
                p._accumulate(g[tuple(sl)])

    return _node(out_data, tuple(parts), backward, "concat")


# -- reductions ---------------------------------------------------------

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape))

    return _node(out_data, (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        count = a.data.shape[axis]

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape) / count)

    return _node(out_data, (a,), backward, "mean")


# -- elementwise nonlinearities ------------------------------------------

def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out_data)

    return _node(out_data, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _node(out_data, (a,), backward, "log")


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * 0.5 / out_data)

    return _node(out_data, (a,), backward, "sqrt")


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        a._accumulate(g * (a.data > 0.0))

    return _node(out_data, (a,), backward, "relu")


def sigmoid(a: Tensor) -> Tensor:
    # stable in both tails
    out_data = np.empty_like(a.data)
    pos = a.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    out_data[~pos] = ez / (1.0 + ez)

    def backward(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), backward, "sigmoid")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient is zero where the floor binds."""
    out_data = np.maximum(a.data, floor)

    def backward(g):
        a._accumulate(g * (a.data > floor))

    return _node(out_data, (a,), backward, "clamp_min")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a._accumulate(out_data * (g - dot))

    return _node(out_data, (a,), backward, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse

    def backward(g):
        soft = np.exp(out_data)
        a._accumulate(g - soft * g.sum(axis=axis, keepdims=True))

    return _node(out_data, (a,), backward, "log_softmax")


# -- structured ops -----------------------------------------------------

def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]`` with scatter-add gradient into the table."""
    ids = np.asarray(ids)
    out_data = table.data[ids]

    def backward(g):
        buf = np.zeros_like(table.data)
        np.add.at(buf, ids, g)
        table._accumulate(buf)

    return _node(out_data, (table,), backward, "embedding")


def gather_last(a: Tensor, idx: np.ndarray) -> Tensor:
    """Pick ``a[..., idx[...]]`` along the last axis (one pick per row)."""
    idx = np.asarray(idx)
    out_data = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]
    grids = np.indices(idx.shape)

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, (*grids, idx), g)
        a._accumulate(buf)

    return _node(out_data, (a,), backward, "gather_last")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = xhat * gain.data + bias.data
    d = x.data.shape[-1]
    reduce_axes = tuple(range(out_data.ndim - 1))

    def backward(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).sum(axis=reduce_axes))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=reduce_axes))
        if x.requires_grad or x._parents:
            dxhat = g * gain.data
            term = dxhat - dxhat.mean(axis=-1, keepdims=True) \
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(term * inv)

    return _node(out_data, (x, gain, bias), backward, "layer_norm")


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    out_data = x.data * keep

    def backward(g):
        x._accumulate(g * keep)

    return _node(out_data, (x,), backward, "dropout")


def forward_backward(loss: Tensor, params: dict[str, Tensor]) -> None:
    """Backprop from a scalar loss; unreachable params get zero grads."""
    if not np.isfinite(loss.data):
        raise NumericFailure("loss")
    loss.backward()
    for p in params.values():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
