"""Reverse-mode automatic differentiation over small dense float64 tensors.

The engine supplies exactly the operations the encoders and the loss stack
need: matrix product, elementwise arithmetic with restricted broadcasting,
reductions, row softmax / log-softmax, softplus, L2 normalization, digamma
and log-gamma, plus row stacking/gathering for batch assembly.

Every operation records its inputs and a local gradient rule on the output
tensor; creation order doubles as topological order, so `backward` walks the
recorded tape once in reverse.  Graphs are independent of each other: there
is no global state beyond a monotone sequence counter and the grad-enable
flag, so separate graphs may live on separate threads.

NaN/Inf are rejected eagerly whenever a tensor is materialized, which keeps
numerical failures localized to the op that produced them.
"""

from __future__ import annotations

import itertools
import math
from contextlib import contextmanager

import numpy as np

from . import special
from .errors import ContractError, DegenerateInputError, DomainError, NonFiniteError, ShapeError

_seq_counter = itertools.count()
_grad_enabled = True

NORM_EPS = 1e-12


@contextmanager
def no_grad():
    """Disable tape recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array with an optional gradient slot.

    `data` is a C-contiguous (row-major) numpy array.  `grad` is filled by
    `backward` for trainable leaves and stays None otherwise.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn", "_seq")

    def __init__(self, data, requires_grad=False, _parents=(), _grad_fn=None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.size and not _all_finite(arr):
            raise NonFiniteError("tensor would contain NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._grad_fn = _grad_fn
        self._seq = next(_seq_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def tolist(self):
        return self.data.tolist()

    def flat(self):
        """Row-major flat copy of the values."""
        return self.data.reshape(-1).copy()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


_reduce_sum = np.add.reduce


def _all_finite(arr):
    # any NaN/Inf element forces a non-finite sum, so only overflow of a
    # genuinely finite sum reaches the exact elementwise scan
    return math.isfinite(_reduce_sum(arr, axis=None)) or bool(np.all(np.isfinite(arr)))


def _wrap(arr, requires_grad, parents, grad_fn):
    """Trusted constructor for op outputs: `arr` is a fresh float64 ndarray
    (ops guarantee that), so only the finite check runs."""
    if arr.size and not _all_finite(arr):
        raise NonFiniteError("tensor would contain NaN or Inf")
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.requires_grad = requires_grad
    t.grad = None
    t._parents = parents
    t._grad_fn = grad_fn
    t._seq = next(_seq_counter)
    return t


def _make(data, parents, grad_fn):
    """Build an op output, recording the tape node only when grads can flow."""
    if _grad_enabled:
        for p in parents:
            if p.requires_grad:
                return _wrap(data, True, tuple(parents), grad_fn)
    return _wrap(data, False, (), None)


def _unbroadcast(grad, shape):
    """Reduce `grad` back to `shape` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcastable(sa, sb):
    for a, b in zip(reversed(sa), reversed(sb)):
        if a != b and a != 1 and b != 1:
            return False
    return True


def _binary(a, b, fwd, da, db, name):
    a, b = _as_tensor(a), _as_tensor(b)
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast")
    out_data = fwd(a.data, b.data)

    def grad_fn(g):
        return (
            _unbroadcast(da(g, a.data, b.data), a.shape),
            _unbroadcast(db(g, a.data, b.data), b.shape),
        )

    return _make(out_data, (a, b), grad_fn)


def add(a, b):
    if isinstance(b, (int, float)):
        a = _as_tensor(a)
        return _make(a.data + b, (a,), lambda g: (g,))
    if isinstance(a, (int, float)):
        b = _as_tensor(b)
        return _make(a + b.data, (b,), lambda g: (g,))
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g, "add")


def sub(a, b):
    if isinstance(b, (int, float)):
        a = _as_tensor(a)
        return _make(a.data - b, (a,), lambda g: (g,))
    if isinstance(a, (int, float)):
        b = _as_tensor(b)
        return _make(a - b.data, (b,), lambda g: (-g,))
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g, "sub")


def mul(a, b):
    if isinstance(b, (int, float)):
        a = _as_tensor(a)
        return _make(a.data * b, (a,), lambda g: (g * b,))
    if isinstance(a, (int, float)):
        b = _as_tensor(b)
        return _make(a * b.data, (b,), lambda g: (g * a,))
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x, "mul")


def concat1d(tensors):
    """Concatenate 1-D tensors end to end; gradient splits back."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat1d: need at least one tensor")
    offsets = [0]
    for t in tensors:
        if t.data.ndim != 1:
            raise ShapeError("concat1d: all inputs must be 1-D")
        offsets.append(offsets[-1] + t.size)

    def grad_fn(g):
        return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(tensors)))

    return _make(np.concatenate([t.data for t in tensors]), tuple(tensors), grad_fn)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), grad_fn)


def matmul_nt(a, b):
    """a @ b^T without materializing the transpose node."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"matmul_nt: incompatible shapes {a.shape} x {b.shape}^T")

    def grad_fn(g):
        return g @ b.data, g.T @ a.data

    return _make(a.data @ b.data.T, (a, b), grad_fn)


def matvec(m, v):
    """2-D @ 1-D -> 1-D."""
    m, v = _as_tensor(m), _as_tensor(v)
    if m.data.ndim != 2 or v.data.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: incompatible shapes {m.shape} x {v.shape}")

    def grad_fn(g):
        return np.outer(g, v.data), m.data.T @ g

    return _make(m.data @ v.data, (m, v), grad_fn)


def vecmat(v, m):
    """1-D @ 2-D -> 1-D."""
    v, m = _as_tensor(v), _as_tensor(m)
    if v.data.ndim != 1 or m.data.ndim != 2 or v.shape[0] != m.shape[0]:
        raise ShapeError(f"vecmat: incompatible shapes {v.shape} x {m.shape}")

    def grad_fn(g):
        return m.data @ g, np.outer(v.data, g)

    return _make(v.data @ m.data, (v, m), grad_fn)


def transpose(t):
    t = _as_tensor(t)
    if t.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D tensor, got shape {t.shape}")
    return _make(np.ascontiguousarray(t.data.T), (t,), lambda g: (g.T,))


def reshape(t, shape):
    t = _as_tensor(t)
    old = t.shape
    return _make(t.data.reshape(shape), (t,), lambda g: (g.reshape(old),))


def tsum(t, axis=None, keepdims=False):
    t = _as_tensor(t)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, t.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, t.shape).copy(),)

    return _make(t.data.sum(axis=axis, keepdims=keepdims), (t,), grad_fn)


def mean_rows(t):
    """Mean over axis 0 of a 2-D tensor (token pooling)."""
    t = _as_tensor(t)
    if t.data.ndim != 2 or t.shape[0] == 0:
        raise ShapeError(f"mean_rows: expected non-empty 2-D tensor, got {t.shape}")
    return tsum(t, axis=0) * (1.0 / t.shape[0])


def log(t):
    t = _as_tensor(t)
    if np.any(t.data <= 0.0):
        raise DomainError("log: argument must be > 0 everywhere")
    return _make(np.log(t.data), (t,), lambda g: (g / t.data,))


def exp(t):
    t = _as_tensor(t)
    out_data = np.exp(t.data)
    return _make(out_data, (t,), lambda g: (g * out_data,))


def _sigmoid(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softplus(t):
    """Elementwise ln(1 + e^x), overflow-safe; output strictly positive."""
    t = _as_tensor(t)
    out_data = np.maximum(t.data, 0.0) + np.log1p(np.exp(-np.abs(t.data)))
    return _make(out_data, (t,), lambda g: (g * _sigmoid(t.data),))


def softmax_row(t):
    """Row-wise softmax with max-subtraction; each row sums to 1."""
    t = _as_tensor(t)
    if t.data.ndim != 2:
        raise ShapeError(f"softmax_row: expected 2-D tensor, got {t.shape}")
    shifted = t.data - t.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _make(y, (t,), grad_fn)


def log_softmax_row(t):
    t = _as_tensor(t)
    if t.data.ndim != 2:
        raise ShapeError(f"log_softmax_row: expected 2-D tensor, got {t.shape}")
    shifted = t.data - t.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = shifted - lse

    def grad_fn(g):
        return (g - np.exp(y) * g.sum(axis=1, keepdims=True),)

    return _make(y, (t,), grad_fn)


def l2_normalize(v, eps=NORM_EPS):
    """v / ||v|| for a 1-D tensor; rejects near-zero norms."""
    v = _as_tensor(v)
    if v.data.ndim != 1:
        raise ShapeError(f"l2_normalize: expected 1-D tensor, got {v.shape}")
    n = float(np.linalg.norm(v.data))
    if n <= eps:
        raise DegenerateInputError(f"l2_normalize: norm {n} below {eps}")
    y = v.data / n

    def grad_fn(g):
        return ((g - y * float(y @ g)) / n,)

    return _make(y, (v,), grad_fn)


def l2_normalize_rows(t, eps=NORM_EPS):
    """Row-wise unit normalization of a 2-D tensor."""
    t = _as_tensor(t)
    if t.data.ndim != 2:
        raise ShapeError(f"l2_normalize_rows: expected 2-D tensor, got {t.shape}")
    norms = np.linalg.norm(t.data, axis=1, keepdims=True)
    if norms.min() <= eps:
        raise DegenerateInputError(f"l2_normalize_rows: a row norm is below {eps}")
    y = t.data / norms

    def grad_fn(g):
        return ((g - y * (y * g).sum(axis=1, keepdims=True)) / norms,)

    return _make(y, (t,), grad_fn)


def slice_rows(t, start, stop):
    """Contiguous row slice of a 2-D tensor; gradient scatters back."""
    t = _as_tensor(t)
    if t.data.ndim != 2:
        raise ShapeError(f"slice_rows: expected 2-D tensor, got {t.shape}")
    if not 0 <= start < stop <= t.shape[0]:
        raise ShapeError(f"slice_rows: [{start}, {stop}) outside {t.shape[0]} rows")

    def grad_fn(g):
        full = np.zeros_like(t.data)
        full[start:stop] = g
        return (full,)

    return _make(t.data[start:stop].copy(), (t,), grad_fn)


def digamma_t(t):
    """Elementwise digamma; gradient uses trigamma."""
    t = _as_tensor(t)
    if np.any(t.data <= 0.0):
        raise DomainError("digamma: argument must be > 0 everywhere")
    out_data = special.digamma(t.data)
    return _make(np.asarray(out_data), (t,), lambda g: (g * special.trigamma(t.data),))


def lgamma_t(t):
    """Elementwise log-gamma; gradient uses digamma."""
    t = _as_tensor(t)
    if np.any(t.data <= 0.0):
        raise DomainError("lgamma: argument must be > 0 everywhere")
    out_data = special.lgamma(t.data)
    return _make(np.asarray(out_data), (t,), lambda g: (g * special.digamma(t.data),))


def stack_rows(tensors):
    """Stack 1-D tensors of equal length into a 2-D tensor."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("stack_rows: need at least one row")
    width = tensors[0].size
    for t in tensors:
        if t.data.ndim != 1 or t.size != width:
            raise ShapeError("stack_rows: all rows must be 1-D of equal length")
    data = np.stack([t.data for t in tensors])

    def grad_fn(g):
        return tuple(g[i] for i in range(len(tensors)))

    return _make(data, tuple(tensors), grad_fn)


def gather_rows(t, cols):
    """out[i] = t[i, cols[i]] for a 2-D tensor; gradient scatters back."""
    t = _as_tensor(t)
    cols = np.asarray(cols, dtype=np.intp)
    if t.data.ndim != 2 or cols.shape != (t.shape[0],):
        raise ShapeError(f"gather_rows: tensor {t.shape} with {cols.shape[0] if cols.ndim else '?'} columns")
    if np.any(cols < 0) or np.any(cols >= t.shape[1]):
        raise ShapeError("gather_rows: column index out of range")
    rows = np.arange(t.shape[0])

    def grad_fn(g):
        full = np.zeros_like(t.data)
        full[rows, cols] = g
        return (full,)

    return _make(t.data[rows, cols], (t,), grad_fn)


def diag_part(t):
    t = _as_tensor(t)
    if t.data.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ShapeError(f"diag_part: expected square tensor, got {t.shape}")
    return gather_rows(t, np.arange(t.shape[0]))


def trace_graph(root):
    """Recorded operations reachable from `root`, in topological order.

    Creation order is topological by construction (parents exist before
    children), so sorting by sequence id yields a valid tape ordering.
    """
    seen = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen[id(node)] = node
        stack.extend(node._parents)
    return sorted(seen.values(), key=lambda n: n._seq)


def backward(root, accumulate=False):
    """Populate `.grad` on every trainable leaf reachable from `root`.

    `root` must be scalar.  By default each call resets the gradients it
    writes; pass `accumulate=True` to add onto existing values instead.
    """
    if not isinstance(root, Tensor):
        raise ContractError("backward: root must be a Tensor")
    if root.data.size != 1:
        raise ContractError(f"backward: root must be scalar, got shape {root.shape}")

    order = trace_graph(root)
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._grad_fn is None:
            if node.requires_grad:
                if accumulate and node.grad is not None:
                    node.grad = node.grad + g
                else:
                    node.grad = g
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
