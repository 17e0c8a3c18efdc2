"""Dense tensors with tape-based reverse-mode automatic differentiation.

Operations executed inside an active :class:`Tape` are recorded in order; a
backward pass replays that record in reverse. Outside a tape, operations run
as plain numpy computations and nothing is recorded, which is what inference
uses.

    >>> w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = w.sum()
    >>> tape.backward(loss)
    >>> w.grad
    array([1., 1., 1.])
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "CE_FLOOR",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "add",
    "apply_dropout",
    "concat",
    "cross_entropy",
    "embedding_lookup",
    "getitem",
    "log",
    "matmul",
    "mul",
    "reshape",
    "sigmoid",
    "softmax",
    "stack",
    "sub",
    "tanh",
    "tensor_sum",
    "weighted_sum",
]

# Added inside the log of cross_entropy so that a target with zero
# probability mass yields a large finite loss instead of inf.
CE_FLOOR = 1e-9

ArrayLike = Union[np.ndarray, Sequence, float, int]


class ShapeError(ValueError):
    """Operand shapes are incompatible for an operation."""

    def __init__(self, op: str, *shapes: tuple):
        self.op = op
        self.shapes = shapes
        joined = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class TapeError(RuntimeError):
    """Misuse of a tape: replaying twice, non-scalar loss, unrecorded loss."""


_local = threading.local()


def _active_tape() -> Optional["Tape"]:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of differentiable operations.

    A tape is confined to the thread that entered it. It can be replayed
    backward exactly once; a second :meth:`backward` raises
    :class:`TapeError` rather than silently doubling gradients.
    """

    def __init__(self) -> None:
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, out: "Tensor", parents: tuple["Tensor", ...], backward: Callable) -> None:
        if self.consumed:
            raise TapeError("cannot record onto a tape that was already replayed")
        out._tape = self
        self.records.append((out, parents, backward))

    def backward(self, loss: "Tensor") -> None:
        if self.consumed:
            raise TapeError("backward already ran on this tape; double-backward is unsupported")
        if loss.data.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise TapeError("loss was not produced on this tape")
        self.consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, parents, rule in reversed(self.records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            out._accumulate(g)
            for parent, pg in zip(parents, rule(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._tape is self:
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
                else:
                    parent._accumulate(pg)
        # release closures; they pin every intermediate array
        self.records = []


class Tensor:
    """A dense n-dimensional array with an optional accumulated gradient.

    ``data`` is a numpy array (row-major). ``grad`` is ``None`` until a
    backward pass reaches the tensor, then an array of the same shape that
    keeps accumulating until :meth:`zero_grad`.
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True).reshape(self.data.shape)
        else:
            self.grad += g

    def backward(self) -> None:
        if self._tape is None:
            raise TapeError("tensor was not produced inside a Tape context")
        self._tape.backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

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
        return getitem(self, idx)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if isinstance(like, Tensor) else None
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # python scalars and raw arrays adopt the dtype of the tensor operand
    return _as_tensor(a, b), _as_tensor(b, a)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], rule: Callable) -> Tensor:
    tape = _active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, parents, rule)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# --- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data
    sa, sb = a.shape, b.shape
    return _make(ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, sa), _unbroadcast(g * ad, sb)))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    y[~pos] = e / (1.0 + e)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def log(x: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log of ``x + floor``."""
    shifted = x.data + floor
    return _make(np.log(shifted), (x,), lambda g: (g / shifted,))


def apply_dropout(x: Tensor, mask: Tensor) -> Tensor:
    """Multiply by a precomputed (already rescaled) dropout mask."""
    return mul(x, mask)


# --- linear algebra --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product ``a @ b`` for ``b`` of shape [k, n].

    ``a`` may be a vector [k], a matrix [m, k] or carry extra leading axes
    [..., k]; those are treated as a stack of rows.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data
    out = ad @ bd

    def rule(g):
        ga = g @ bd.T
        gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, bd.shape[1])
        return ga, gb

    return _make(out, (a, b), rule)


def weighted_sum(weights: Tensor, values: Tensor) -> Tensor:
    """Sum of ``values`` rows weighted by ``weights`` along the position axis.

    ``weights`` is [..., N] and ``values`` is [..., N, D]; the result is
    [..., D]. With one-hot rows in ``values`` this turns attention over
    positions into a distribution over word types.
    """
    weights, values = _as_tensor(weights), _as_tensor(values)
    if values.ndim != weights.ndim + 1 or values.shape[:-1] != weights.shape:
        raise ShapeError("weighted_sum", weights.shape, values.shape)
    wd, vd = weights.data, values.data
    out = np.einsum("...n,...nd->...d", wd, vd)

    track_values = values.requires_grad

    def rule(g):
        gw = np.einsum("...d,...nd->...n", g, vd)
        gv = wd[..., :, None] * g[..., None, :] if track_values else None
        return gw, gv

    return _make(out, (weights, values), rule)


# --- reductions and structure ----------------------------------------------


def tensor_sum(x: Tensor, axis=None) -> Tensor:
    shape = x.shape
    out = np.sum(x.data, axis=axis)

    def rule(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % len(shape) for a in axes)
        return (np.broadcast_to(np.expand_dims(g, axes), shape).copy(),)

    return _make(np.asarray(out), (x,), rule)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, tuple(shape)) from None
    return _make(out, (x,), lambda g: (g.reshape(old),))


def getitem(x: Tensor, idx) -> Tensor:
    shape = x.shape
    out = x.data[idx]

    def rule(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(out, copy=True), (x,), rule)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    nd = tensors[0].ndim
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError("concat", tensors[0].shape, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(out, tuple(tensors), rule)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("stack needs at least one tensor")
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ShapeError("stack", tensors[0].shape, t.shape)
    out = np.stack([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim

    def rule(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return _make(out, tuple(tensors), rule)


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Gather rows of ``table``; gradient is scatter-added back to rows."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError("embedding_lookup", table.shape, idx.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range for table with {table.shape[0]} rows")
    shape = table.shape
    out = table.data[idx]

    def rule(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, shape[1]))
        return (full,)

    return _make(out, (table,), rule)


# --- probability -----------------------------------------------------------


def softmax(x: Tensor, mask=None, axis: int = -1) -> Tensor:
    """Max-stabilised softmax; masked-out (False) positions get exactly 0.

    Raises ``ValueError`` if any slice along ``axis`` is fully masked.
    """
    xd = x.data
    if mask is not None:
        m = np.asarray(mask.data if isinstance(mask, Tensor) else mask, dtype=bool)
        if m.shape != xd.shape:
            raise ShapeError("softmax", xd.shape, m.shape)
        if not np.all(m.any(axis=axis)):
            raise ValueError("softmax: every position is masked")
        neg = np.where(m, xd, -np.inf)
        shifted = neg - neg.max(axis=axis, keepdims=True)
        e = np.where(m, np.exp(shifted), 0.0)
    else:
        if xd.shape[axis] == 0:
            raise ValueError("softmax over an empty axis")
        e = np.exp(xd - xd.max(axis=axis, keepdims=True))
    y = (e / e.sum(axis=axis, keepdims=True)).astype(xd.dtype, copy=False)

    def rule(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), rule)


def cross_entropy(pred: Tensor, target) -> Tensor:
    """``-log(pred[target] + CE_FLOOR)``.

    ``pred`` is a probability vector [n] with an integer ``target`` (scalar
    result), or a batch [B, n] with integer targets [B] (result [B]).
    """
    pd = pred.data
    t = np.asarray(target, dtype=np.int64)
    n = pd.shape[-1]
    if pd.ndim == 1:
        if t.ndim != 0:
            raise ShapeError("cross_entropy", pd.shape, t.shape)
    elif pd.ndim == 2:
        if t.shape != (pd.shape[0],):
            raise ShapeError("cross_entropy", pd.shape, t.shape)
    else:
        raise ShapeError("cross_entropy", pd.shape, t.shape)
    if np.any(t < 0) or np.any(t >= n):
        raise IndexError(f"cross_entropy target out of range for {n} classes")

    if pd.ndim == 1:
        p = pd[t]
        out = -np.log(p + CE_FLOOR)

        def rule(g):
            gp = np.zeros_like(pd)
            gp[t] = -g / (p + CE_FLOOR)
            return (gp,)

    else:
        rows = np.arange(pd.shape[0])
        p = pd[rows, t]
        out = -np.log(p + CE_FLOOR)

        def rule(g):
            gp = np.zeros_like(pd)
            gp[rows, t] = -g / (p + CE_FLOOR)
            return (gp,)

    return _make(np.asarray(out, dtype=pd.dtype), (pred,), rule)


