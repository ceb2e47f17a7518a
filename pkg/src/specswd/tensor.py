"""Dense numpy tensors with a reverse-mode autodiff tape.

A :class:`Tape` records primitive operations while it is active (``with Tape()
as tape:``). Only operations with at least one input that requires a gradient
are recorded. ``tape.backward(root)`` walks the recorded nodes once, in
reverse recording order, and accumulates gradients in that fixed order so
results are reproducible run to run.

Tensors are treated as immutable values: no operation mutates ``.data``.
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, EvaluationError

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "specswd_active_tape", default=None
)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # operator sugar; all of these route through the recorded primitives below
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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


@dataclass
class Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str


class Tape:
    """Records operations for one forward pass; gradients via :meth:`backward`."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp, op: str) -> None:
        self.nodes.append(Node(out, inputs, vjp, op))

    def backward(self, root: Tensor, wrt: Sequence[Tensor] | None = None) -> list[np.ndarray]:
        """Gradients of scalar ``root`` with respect to ``wrt``.

        Leaves that ``root`` does not depend on get a zero gradient. When
        ``wrt`` is omitted, every leaf seen by the tape is used and each
        leaf's ``.grad`` is set.
        """
        if root.data.size != 1:
            raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
        grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        if wrt is None:
            wrt = self.leaves()
            out = [_as_grad(grads.get(id(t)), t) for t in wrt]
            for t, g in zip(wrt, out):
                t.grad = g
            return out
        return [_as_grad(grads.get(id(t)), t) for t in wrt]

    def leaves(self) -> list[Tensor]:
        produced = {id(n.out) for n in self.nodes}
        seen: dict[int, Tensor] = {}
        for n in self.nodes:
            for t in n.inputs:
                if t.requires_grad and id(t) not in produced and id(t) not in seen:
                    seen[id(t)] = t
        return list(seen.values())


def _as_grad(g, t: Tensor) -> np.ndarray:
    if g is None:
        return np.zeros_like(t.data)
    return np.asarray(g, dtype=t.dtype).reshape(t.shape)


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE.get()


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def from_op(data: np.ndarray, inputs: Sequence[Tensor], vjp, op: str) -> Tensor:
    """Wrap a primitive's result, recording it on the active tape if needed.

    ``vjp`` maps the upstream gradient (shape of ``data``) to one gradient
    per input (``None`` for inputs that need none).
    """
    inputs = tuple(inputs)
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=False)
    tape = _ACTIVE_TAPE.get()
    if needs and tape is not None:
        out.requires_grad = True
        tape.record(out, inputs, vjp, op)
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not match") from None


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "add")
    return from_op(
        a.data + b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "sub")
    return from_op(
        a.data - b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "mul")
    return from_op(
        a.data * b.data,
        (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data
    return from_op(
        out,
        (a, b),
        lambda g: (unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def scale(a: Tensor, s: float) -> Tensor:
    return from_op(a.data * s, (a,), lambda g: (g * s,), "scale")


def square(a: Tensor) -> Tensor:
    return from_op(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return from_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return from_op(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,), "relu")


_BINARY = {"add": add, "sub": sub, "mul": mul}
_UNARY = {"square": square, "exp": exp, "relu": relu}


def elementwise(op_kind: str, a: Tensor, b: Tensor | float | None = None) -> Tensor:
    """Dispatch one of ``add, sub, mul, square, scale, exp, relu``.

    ``scale`` takes the scalar factor as ``b``.
    """
    if op_kind in _BINARY:
        if b is None:
            raise ValueError(f"{op_kind} needs two operands")
        a, b = as_tensor(a), as_tensor(b, like=as_tensor(a))
        if a.shape != b.shape:
            raise DimensionError(f"{op_kind}: shapes {a.shape} and {b.shape} differ")
        return _BINARY[op_kind](a, b)
    if op_kind in _UNARY:
        return _UNARY[op_kind](as_tensor(a))
    if op_kind == "scale":
        return scale(as_tensor(a), float(b))
    raise ValueError(f"unknown elementwise op {op_kind!r}")


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# ---------------------------------------------------------------------------
# reductions and shape ops


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return from_op(np.asarray(out), (a,), vjp, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return scale(sum_(a, axis=axes, keepdims=keepdims), 1.0 / n)


def frobenius_norm_sq(a: Tensor) -> Tensor:
    """Sum of squared entries, differentiable."""
    return sum_(square(as_tensor(a)))


def reshape(a: Tensor, shape) -> Tensor:
    return from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return from_op(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def getitem(a: Tensor, index) -> Tensor:
    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return from_op(np.asarray(a.data[index]), (a,), vjp, "getitem")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    out = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return from_op(out, tensors, vjp, "stack")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair(a, b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not align")

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return from_op(a.data @ b.data, (a, b), vjp, "matmul")


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (m + np.log(s)).squeeze(axis)
    soft = e / s
    return from_op(out, (a,), lambda g: (np.expand_dims(g, axis) * soft,), "logsumexp")


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of ``(n, classes)`` logits."""
    labels = np.asarray(labels)
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    onehot[np.arange(len(labels)), labels] = 1
    picked = sum_(mul(logits, Tensor(onehot)), axis=-1)
    return mean(sub(logsumexp(logits, axis=-1), picked))


# ---------------------------------------------------------------------------
# convolution and pooling, NCHW layout


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 1) -> Tensor:
    """2-D cross-correlation via im2col."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} incompatible with weight {w.shape}")
    n, cin, _, _ = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
    wmat = w.data.reshape(cout, -1)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)

    def vjp(g):
        gflat = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gw = (gflat.T @ cols).reshape(w.shape)
        gcols = (gflat @ wmat).reshape(n, ho, wo, cin, kh, kw)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        gx = gxp[:, :, padding : padding + x.shape[2], padding : padding + x.shape[3]]
        grads = [gx, gw]
        if b is not None:
            grads.append(gflat.sum(axis=0))
        return grads

    inputs = (x, w) if b is None else (x, w, b)
    return from_op(np.ascontiguousarray(out), inputs, vjp, "conv2d")


def avg_pool2x2(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"avg_pool2x2 needs even spatial size, got {x.shape}")
    d = x.data
    # four strided slices beat a reshape+mean over two non-adjacent axes
    out = (d[:, :, 0::2, 0::2] + d[:, :, 1::2, 0::2] + d[:, :, 0::2, 1::2] + d[:, :, 1::2, 1::2]) * 0.25

    def vjp(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,)

    return from_op(out, (x,), vjp, "avg_pool2x2")


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_relative_error: float
    num_parameters_checked: int
    step_size: float

    def passed(self, tol: float) -> bool:
        return self.max_relative_error < tol


def tape_gradients(f: Callable[..., Tensor], inputs: Sequence[np.ndarray]) -> tuple[float, list[np.ndarray]]:
    leaves = [Tensor(np.array(x, copy=True), requires_grad=True) for x in inputs]
    with Tape() as tape:
        out = f(*leaves)
    return float(out.data), tape.backward(out, leaves)


def check_gradients(
    f: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    step: float = 1e-5,
    max_probes: int | None = None,
    rng: np.random.Generator | None = None,
    fd_fn: Callable[..., Tensor] | None = None,
) -> GradCheckReport:
    """Compare tape gradients of ``f(*inputs)`` against central differences.

    With ``max_probes`` set, that many entries are drawn uniformly (without
    replacement) across all inputs; otherwise every entry is probed. The
    relative error per entry uses ``max(|g|, |g_fd|, 1e-12)`` as denominator.
    ``fd_fn`` differentiates a different function numerically, for surrogate
    gradients that are exact only for a frozen version of ``f``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    inputs = [np.asarray(x, dtype=np.float64) for x in inputs]
    value, grads = tape_gradients(f, inputs)
    if not np.isfinite(value):
        raise EvaluationError(f"function value is not finite: {value}")
    sizes = [x.size for x in inputs]
    total = int(sum(sizes))
    if max_probes is None or max_probes >= total:
        probes = np.arange(total)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        probes = np.sort(rng.choice(total, size=max_probes, replace=False))
    offsets = np.cumsum([0] + sizes)

    def evaluate(which: int, flat_index: int, delta: float) -> float:
        xs = [x for x in inputs]
        moved = inputs[which].copy()
        moved.reshape(-1)[flat_index] += delta
        xs[which] = moved
        v = float((fd_fn or f)(*[Tensor(x) for x in xs]).data)
        if not np.isfinite(v):
            raise EvaluationError(f"function value is not finite at probe {flat_index}")
        return v

    worst = 0.0
    for p in probes:
        which = int(np.searchsorted(offsets, p, side="right") - 1)
        local = int(p - offsets[which])
        fd = (evaluate(which, local, step) - evaluate(which, local, -step)) / (2 * step)
        g = float(grads[which].reshape(-1)[local])
        err = abs(g - fd) / max(abs(g), abs(fd), 1e-12)
        worst = max(worst, err)
    return GradCheckReport(worst, len(probes), step)


def finite_difference_check(
    f: Callable[[Tensor], Tensor], x, step: float = 1e-5, fd_fn: Callable[[Tensor], Tensor] | None = None
) -> GradCheckReport:
    """Single-input form of :func:`check_gradients` probing every entry of ``x``."""
    x = x.data if isinstance(x, Tensor) else x
    return check_gradients(f, [np.asarray(x, dtype=np.float64)], step=step, fd_fn=fd_fn)
