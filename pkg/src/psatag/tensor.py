"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation builds a node holding its parents and a closure that maps the
output gradient to parent gradients. ``backward`` walks the nodes reachable
from a scalar loss in reverse topological order.
"""
from __future__ import annotations

import numpy as np


class DegenerateMask(ValueError):
    """Raised when a softmax row has no enabled entries."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    # operator sugar
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    @property
    def T(self):
        return swapaxes(self, -1, -2)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    """Wrap an op output; attach the backward closure only when needed."""
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by tensor operation")
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z):
    # branch-free stable logistic
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x):
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return _result(y, (x,), lambda g: (g * y,))


def log(x):
    x = as_tensor(x)
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,))


def blend(mask, a, b):
    """``mask * a + (1 - mask) * b`` for a constant 0/1 mask (broadcastable)."""
    a, b = as_tensor(a), as_tensor(b)
    m = np.asarray(mask, dtype=np.float64)
    return _result(
        m * a.data + (1.0 - m) * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * m, a.shape), _unbroadcast(g * (1.0 - m), b.shape)),
    )


# ------------------------------------------------------------------ structure

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data @ b.data, (a, b), backward)


def swapaxes(x, ax1, ax2):
    x = as_tensor(x)
    return _result(np.swapaxes(x.data, ax1, ax2), (x,), lambda g: (np.swapaxes(g, ax1, ax2),))


def reshape(x, shape):
    x = as_tensor(x)
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def index(x, idx):
    """Basic or advanced indexing; repeated indices accumulate on backward."""
    x = as_tensor(x)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _result(x.data[idx], (x,), backward)


def take_rows(table, ids):
    """Embedding lookup: rows of a 2-D table selected by an integer array."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _result(table.data[ids], (table,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward)


# ----------------------------------------------------------------- reductions

def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def logsumexp(x, axis=-1):
    x = as_tensor(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (m + np.log(s)).squeeze(axis)
    p = e / s
    return _result(out, (x,), lambda g: (np.expand_dims(g, axis) * p,))


def masked_softmax(scores, enabled, axis=-1, empty="raise"):
    """Softmax over ``axis`` restricted to entries where ``enabled`` is true.

    Disabled entries are excluded from both the max and the normaliser and come
    out as exact zeros. A row with nothing enabled raises ``DegenerateMask``
    unless ``empty="zero"``, in which case the row is all zeros.
    """
    scores = as_tensor(scores)
    enabled = np.broadcast_to(np.asarray(enabled, dtype=bool), scores.shape)
    any_on = enabled.any(axis=axis, keepdims=True)
    if empty == "raise" and not any_on.all():
        raise DegenerateMask("every entry of a softmax row is disabled")
    masked = np.where(enabled, scores.data, -np.inf)
    m = np.where(any_on, np.max(masked, axis=axis, keepdims=True), 0.0)
    e = np.where(enabled, np.exp(np.where(enabled, scores.data - m, 0.0)), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    p = e / np.where(any_on, s, 1.0)

    def backward(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - dot),)

    return _result(p, (scores,), backward)


def dropout(x, p, rng, training):
    """Inverted dropout; identity at inference or when ``p == 0``."""
    x = as_tensor(x)
    if not training or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


# --------------------------------------------------------------------- fused

def lstm_pointwise(gates, c):
    """LSTM cell nonlinearity on pre-activations ``gates`` (..., 4h).

    Gate order is input, forget, cell-candidate, output. Returns the
    concatenation ``[h', c']`` along the last axis.
    """
    gates, c = as_tensor(gates), as_tensor(c)
    hdim = c.shape[-1]
    zi, zf, zg, zo = np.split(gates.data, 4, axis=-1)
    i, f, o = _sigmoid(zi), _sigmoid(zf), _sigmoid(zo)
    gg = np.tanh(zg)
    c_new = f * c.data + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc

    def backward(grad):
        gh, gc = grad[..., :hdim], grad[..., hdim:]
        dc = gc + gh * o * (1.0 - tc * tc)
        d_gates = np.concatenate(
            [
                dc * gg * i * (1.0 - i),
                dc * c.data * f * (1.0 - f),
                dc * i * (1.0 - gg * gg),
                gh * tc * o * (1.0 - o),
            ],
            axis=-1,
        )
        return d_gates, dc * f

    return _result(np.concatenate([h_new, c_new], axis=-1), (gates, c), backward)


# ------------------------------------------------------------------- backward

def _topo_order(root):
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss):
    """Reverse-mode sweep from a scalar ``loss``.

    Returns ``{leaf: gradient ndarray}`` for every leaf tensor with
    ``requires_grad`` reachable from the loss; the same arrays are stored on
    ``leaf.grad``.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            leaves[node] = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for leaf, g in leaves.items():
        leaf.grad = g
    return leaves


# ----------------------------------------------------------- params and clips

def glorot_init(rows, cols, rng):
    """Uniform Glorot sample in ``[-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]``.

    ``rng`` is an integer seed or a ``numpy.random.Generator``.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"glorot_init needs positive dims, got ({rows}, {cols})")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    bound = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads, threshold):
    """Rescale all gradients jointly so their global L2 norm is at most ``threshold``."""
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    norm = global_norm(grads)
    # slack keeps clipping idempotent under rounding of the rescaled norm
    if norm <= threshold * (1.0 + 1e-12):
        return dict(grads)
    scale = threshold / norm
    return {k: g * scale for k, g in grads.items()}
