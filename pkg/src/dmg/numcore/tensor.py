"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Every op takes :class:`Tensor` (or array-like) inputs and returns a new
:class:`Tensor`.  When at least one input requires a gradient the result
remembers its parents and a closure mapping the output gradient to one
gradient per parent.  :func:`backward` collects the reachable nodes into a
:class:`Tape`, ordered by creation sequence, and replays it in reverse.

All arithmetic is float64.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

_seq = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array that can take part in a recorded computation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._seq = next(_seq)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"expected a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # arithmetic sugar
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._seq = next(_seq)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


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


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: (g * y,))


def log(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _make(np.log(xd), (x,), lambda g: (g / xd,))


# ---------------------------------------------------------------------------
# linear algebra and reductions


def matmul(a, b) -> Tensor:
    """Matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(ad @ bd, (a, b), backward)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def sum_unordered(x, axis: int) -> Tensor:
    """Sum along ``axis`` whose value does not depend on element order.

    Values are sorted before summing, so any permutation along ``axis``
    gives a bit-identical result.
    """
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(np.sort(x.data, axis=axis).sum(axis=axis), (x,), backward)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def softmax(x, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max subtracted before exponentiating)."""
    x = as_tensor(x)
    if x.size == 0:
        raise ValueError("softmax of an empty tensor")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), backward)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.size == 0:
        raise ValueError("log_softmax of an empty tensor")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _make(y, (x,), backward)


# ---------------------------------------------------------------------------
# shape manipulation and indexing


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([x.data for x in xs], axis=axis),
        xs,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def stack(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    n = len(xs)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return _make(np.stack([x.data for x in xs], axis=axis), xs, backward)


def getitem(x, index) -> Tensor:
    """Basic or advanced indexing; repeated indices accumulate gradient."""
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _make(x.data[index], (x,), backward)


def take_rows(table, idx) -> Tensor:
    """Embedding lookup: ``table[idx]`` for an integer array of any shape."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    shape = table.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx.reshape(-1), g.reshape(-1, shape[-1]))
        return (out,)

    return _make(table.data[idx], (table,), backward)


def pick(x, idx) -> Tensor:
    """Select ``x[..., idx[...]]`` along the last axis (gather)."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    expanded = idx[..., None]
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        np.put_along_axis(out, expanded, g[..., None], axis=-1)
        return (out,)

    return _make(np.take_along_axis(x.data, expanded, axis=-1)[..., 0], (x,), backward)


def blend(mask, new, old) -> Tensor:
    """Row-wise select ``mask * new + (1 - mask) * old`` for a constant 0/1 mask."""
    new, old = as_tensor(new), as_tensor(old)
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim < new.ndim:
        m = m.reshape(m.shape + (1,) * (new.ndim - m.ndim))
    inv = 1.0 - m
    return _make(
        m * new.data + inv * old.data,
        (new, old),
        lambda g: (_unbroadcast(g * m, new.shape), _unbroadcast(g * inv, old.shape)),
    )


# ---------------------------------------------------------------------------
# tape


class Tape:
    """Reachable computation nodes of a scalar loss in reverse creation order.

    Creation order is a topological order of the graph, so walking it
    backwards visits every node after all of its consumers.
    """

    def __init__(self, loss: Tensor):
        if loss.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        self.loss = loss
        seen: set[int] = set()
        nodes: list[Tensor] = []
        stack_ = [loss]
        while stack_:
            t = stack_.pop()
            if id(t) in seen or not t.requires_grad:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack_.extend(t._parents)
        nodes.sort(key=lambda t: t._seq, reverse=True)
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def replay(self) -> dict[int, np.ndarray]:
        """Propagate d(loss)/d(node) for every node; returns leaf gradients by id."""
        grads: dict[int, np.ndarray] = {id(self.loss): np.ones(self.loss.shape)}
        leaves: dict[int, np.ndarray] = {}
        for node in self.nodes:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                leaves[id(node)] = g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        return leaves


def backward(loss: Tensor, wrt: Mapping[str, Tensor] | Iterable[Tensor] | None = None):
    """Back-propagate a scalar loss.

    Sets ``.grad`` on every reachable leaf.  If ``wrt`` is a mapping of
    name to tensor, returns a dict of gradients with zeros for tensors the
    loss does not depend on; a plain iterable returns a list.
    """
    loss = as_tensor(loss)
    tape = Tape(loss)
    leaves = tape.replay()
    for node in tape.nodes:
        if node._backward is None:
            node.grad = leaves.get(id(node))
    if wrt is None:
        return None
    if isinstance(wrt, Mapping):
        return {k: _grad_or_zero(leaves, t) for k, t in wrt.items()}
    return [_grad_or_zero(leaves, t) for t in wrt]


def _grad_or_zero(leaves, t: Tensor) -> np.ndarray:
    g = leaves.get(id(t))
    return np.zeros(t.shape) if g is None else g
