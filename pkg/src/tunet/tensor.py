"""Dense tensors with reverse-mode automatic differentiation.

Values are numpy arrays, float32 by default (training and inference) with a
float64 switch for verification; gradient checks are meaningless at 32-bit.
Every differentiable operation records a node on the active :class:`Tape`;
without an active tape the same code runs as plain numpy, producing bitwise
identical values in the same precision.
"""

from __future__ import annotations

import os
from typing import Callable, NamedTuple, Sequence

import numpy as np

DEFAULT_DTYPE = np.dtype(np.float32)

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

# Debug switch: verify that every primitive keeps finite inputs finite.
CHECK_FINITE = os.environ.get("TUNET_CHECK_FINITE", "") not in ("", "0")

_TAPE_STACK: list["Tape"] = []


class Node:
    """One recorded primitive: its output, inputs and adjoint rule."""

    __slots__ = ("out", "inputs", "backward_fn", "tape")

    def __init__(self, out, inputs, backward_fn, tape):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.tape = tape


class Tape:
    """Ordered op record; construction order guarantees inputs precede consumers."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """Dense real array, optionally participating in the active tape."""

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            raise TypeError("Tensor wraps array-like data, not another Tensor")
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: Node | None = None
        self.name = name

    # -- introspection -------------------------------------------------

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
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # -- operator sugar ------------------------------------------------

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return tslice(self, key)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None, keepdims=False):
        return reduce_max(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self)

    def backward(self):
        backward(self)


def parameter(data, name: str | None = None, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype, name=name)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, dtype=dtype)


# ---------------------------------------------------------------------
# Recording machinery
# ---------------------------------------------------------------------


def _participates(t: Tensor, tape: Tape) -> bool:
    return t.requires_grad or (t.node is not None and t.node.tape is tape)


def record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Attach ``out`` to the active tape if any input participates.

    ``backward_fn(adjoint) -> per-input adjoints`` (``None`` for inputs that
    need no gradient). Extension hook for fused primitives in other modules.
    """
    if CHECK_FINITE and not np.all(np.isfinite(out.data)):
        raise FloatingPointError(f"non-finite values in op output {out.shape}")
    tape = active_tape()
    if tape is not None and any(_participates(t, tape) for t in inputs):
        node = Node(out, tuple(inputs), backward_fn, tape)
        out.node = node
        tape.nodes.append(node)
    return out


def _coerce_pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.data.dtype != b.data.dtype:
            raise ValueError(
                f"mixed float widths: {a.data.dtype} vs {b.data.dtype}; convert explicitly"
            )
        return a, b
    if isinstance(a, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(b, Tensor):
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    raise TypeError("at least one operand must be a Tensor")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (adjoint of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out = Tensor(a.data + b.data)

    def backward_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return record(out, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out = Tensor(a.data - b.data)

    def backward_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return record(out, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out = Tensor(a.data * b.data)

    def backward_fn(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return record(out, (a, b), backward_fn)


def div(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out = Tensor(a.data / b.data)

    def backward_fn(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return record(out, (a, b), backward_fn)


def matmul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward_fn(g):
        return g @ b.data.T, a.data.T @ g

    return record(out, (a, b), backward_fn)


def exp(x: Tensor) -> Tensor:
    out = Tensor(np.exp(x.data))

    def backward_fn(g):
        return (g * out.data,)

    return record(out, (x,), backward_fn)


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data))

    def backward_fn(g):
        return (g / x.data,)

    return record(out, (x,), backward_fn)


def power(x: Tensor, p: float) -> Tensor:
    p = float(p)
    out = Tensor(x.data**p)

    def backward_fn(g):
        return (g * p * x.data ** (p - 1.0),)

    return record(out, (x,), backward_fn)


def sqrt(x: Tensor) -> Tensor:
    return power(x, 0.5)


def tanh(x: Tensor) -> Tensor:
    out = Tensor(np.tanh(x.data))

    def backward_fn(g):
        return (g * (1.0 - out.data * out.data),)

    return record(out, (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    out = Tensor(_sigmoid(x.data))

    def backward_fn(g):
        return (g * out.data * (1.0 - out.data),)

    return record(out, (x,), backward_fn)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))

    # Subgradient at 0 is the left-continuous choice: relu'(0) = 0.
    def backward_fn(g):
        return (g * (x.data > 0),)

    return record(out, (x,), backward_fn)


def leaky_relu(x: Tensor, negative_slope: float = 0.01) -> Tensor:
    xd = x.data
    out = Tensor(np.where(xd > 0, xd, negative_slope * xd))

    # Left-continuous at 0: slope is negative_slope there.
    def backward_fn(g):
        return (g * np.where(xd > 0, 1.0, negative_slope).astype(xd.dtype),)

    return record(out, (x,), backward_fn)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def backward_fn(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False),)

    return record(out, (x,), backward_fn)


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims))
    count = x.data.size // max(out.data.size, 1)

    def backward_fn(g):
        g = np.asarray(g) / count
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False),)

    return record(out, (x,), backward_fn)


def reduce_max(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.max(axis=axis, keepdims=keepdims))

    # Ties route the full adjoint to the first maximal entry (left-continuous
    # subgradient), so finite-difference oracles agree away from exact ties.
    def backward_fn(g):
        g = np.asarray(g)
        if axis is None:
            gx = np.zeros_like(x.data)
            gx.flat[int(np.argmax(x.data))] = g
            return (gx,)
        idx = np.argmax(x.data, axis=axis)
        gx = np.zeros_like(x.data)
        ge = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(gx, np.expand_dims(idx, axis), ge, axis=axis)
        return (gx,)

    return record(out, (x,), backward_fn)


def tslice(x: Tensor, key) -> Tensor:
    """Basic-indexing slice (supports negative steps; no fancy indexing)."""
    out = Tensor(x.data[key])

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        gx[key] += g
        return (gx,)

    return record(out, (x,), backward_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise ValueError("concat requires uniform dtype")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return record(out, tuple(tensors), backward_fn)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def backward_fn(g):
        return (g.reshape(x.data.shape),)

    return record(out, (x,), backward_fn)


def transpose(x: Tensor, axes=None) -> Tensor:
    out = Tensor(np.transpose(x.data, axes))
    inv = None if axes is None else np.argsort(axes)

    def backward_fn(g):
        return (np.transpose(g, inv),)

    return record(out, (x,), backward_fn)


def pad(x: Tensor, pad_width) -> Tensor:
    """Zero padding; ``pad_width`` follows ``np.pad`` conventions."""
    out = Tensor(np.pad(x.data, pad_width))
    widths = np.asarray(np.broadcast_to(np.asarray(pad_width), (x.ndim, 2)))
    key = tuple(slice(int(b), int(b) + n) for (b, _), n in zip(widths, x.data.shape))

    def backward_fn(g):
        return (g[key],)

    return record(out, (x,), backward_fn)


def absolute(x: Tensor) -> Tensor:
    out = Tensor(np.abs(x.data))

    def backward_fn(g):
        return (g * np.sign(x.data),)

    return record(out, (x,), backward_fn)


# ---------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Propagate adjoints from a scalar loss back to trainable leaves.

    Repeated calls accumulate into ``.grad``; gradients of a constant
    (off-tape) scalar are identically zero, so nothing is deposited.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
    node = loss.node
    if node is None:
        return
    tape = node.tape
    adjoints: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for n in reversed(tape.nodes):
        g = adjoints.pop(id(n.out), None)
        if g is None:
            continue
        input_grads = n.backward_fn(g)
        for inp, gi in zip(n.inputs, input_grads):
            if gi is None:
                continue
            if inp.requires_grad:
                inp.grad = np.array(gi, copy=True) if inp.grad is None else inp.grad + gi
            if inp.node is not None and inp.node.tape is tape:
                prev = adjoints.get(id(inp))
                adjoints[id(inp)] = gi if prev is None else prev + gi


# ---------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------


class GradCheckResult(NamedTuple):
    max_rel_error: float
    nan_count: int


def grad_check(
    f: Callable[[Tensor], Tensor],
    x,
    eps: float = 1e-5,
    sample: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    """Compare tape gradients of scalar-valued ``f`` against central differences.

    Runs in float64 regardless of the input dtype. ``sample`` limits the
    check to that many randomly chosen coordinates (all by default). The
    relative error at a coordinate is
    ``|analytic - fd| / max(|analytic|, |fd|, 1e-8)``.
    """
    xd = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(xd.copy(), requires_grad=True)
    with Tape():
        y = f(leaf)
        if not isinstance(y, Tensor) or y.data.size != 1:
            raise ValueError("grad_check requires a scalar-valued function")
        backward(y)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(xd)
    analytic = np.asarray(analytic, dtype=np.float64).ravel()

    n = xd.size
    if sample is not None and sample < n:
        gen = rng if rng is not None else np.random.default_rng(0)
        coords = gen.choice(n, size=sample, replace=False)
    else:
        coords = np.arange(n)

    base = xd.ravel()
    max_rel = 0.0
    nan_count = 0
    for i in coords:
        pert = base.copy()
        with np.errstate(all="ignore"):
            pert[i] = base[i] + eps
            fp = f(Tensor(pert.reshape(xd.shape))).item()
            pert[i] = base[i] - eps
            fm = f(Tensor(pert.reshape(xd.shape))).item()
        if not (np.isfinite(fp) and np.isfinite(fm)):
            nan_count += 1
            continue
        fd = (fp - fm) / (2.0 * eps)
        a = analytic[i]
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
        max_rel = max(max_rel, rel)
    return GradCheckResult(max_rel, nan_count)
