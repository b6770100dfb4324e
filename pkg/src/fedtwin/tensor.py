"""Dense float64 tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a contiguous float64 numpy array. While a
:class:`Tape` is active on the current thread, differentiable operations
append themselves to it in execution order (which is a topological order
for a dynamically built graph). ``Tape.backward`` then walks the records
in reverse exactly once and accumulates gradients into the ``grad``
buffer of every participating tensor.

Conventions:

* everything is float64; desk-scale models are small and the extra
  precision keeps finite-difference gradient checks tight
* the only implicit broadcasting is scalar-vs-tensor; shaped broadcasts
  must go through the explicit :func:`broadcast_to` op
* every op checks its output for NaN/Inf and raises
  :class:`~fedtwin.errors.NumericDomainError` naming the op
* reductions use numpy's deterministic pairwise summation, so repeated
  runs over identical data are bit-identical
* a Tape belongs to one thread; independent tapes may run concurrently
  on separate threads (one per federation client)
"""

from __future__ import annotations

import itertools
import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError, NumericDomainError

_local = threading.local()
_tape_ids = itertools.count(1)


def _stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    """The innermost Tape active on this thread, or None."""
    stack = _stack()
    return stack[-1] if stack else None


class _Node:
    """One executed differentiable op: output, inputs, and a backward
    closure mapping d(loss)/d(output) to per-input gradients."""

    __slots__ = ("op", "out", "inputs", "backward")

    def __init__(self, op, out, inputs, backward):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of differentiable ops for one forward pass.

    Use as a context manager; ops executed inside record themselves when
    any input requires a gradient. A tape is single-use: call
    :meth:`backward` once, then build a fresh tape for the next step.
    """

    def __init__(self):
        self.tape_id = next(_tape_ids)
        self.nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _stack().pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise ContractError("tape context exited out of order")
        return False

    def backward(self, loss: "Tensor") -> None:
        """Populate ``grad`` on every tape participant reachable from
        ``loss``. ``loss`` must be a scalar produced on this tape."""
        if self._consumed:
            raise ContractError(
                "tape already consumed; build a new tape for each forward pass"
            )
        if not self.nodes:
            raise ContractError("backward on an empty tape")
        if loss.data.ndim != 0:
            raise ContractError(
                f"backward requires a scalar loss, got shape {loss.shape}"
            )
        self._consumed = True
        loss.grad = np.ones((), dtype=np.float64)
        for node in reversed(self.nodes):
            out_grad = node.out.grad
            if out_grad is None:
                continue
            for tensor, grad in zip(node.inputs, node.backward(out_grad)):
                if grad is None or tensor is None:
                    continue
                if not np.all(np.isfinite(grad)):
                    raise NumericDomainError(
                        f"backward of op '{node.op}' produced non-finite gradients"
                    )
                if tensor.grad is None:
                    tensor.grad = grad
                else:
                    tensor.grad = tensor.grad + grad


class Tensor:
    """Dense float64 array with optional gradient-tape participation."""

    __slots__ = ("data", "grad", "requires_grad", "tape_id")

    def __init__(self, data, requires_grad: bool = False):
        arr = _contiguous(np.asarray(data, dtype=np.float64))
        if any(extent <= 0 for extent in arr.shape):
            raise DimensionError(f"tensor extents must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericDomainError("tensor data must be finite")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.tape_id: int | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic ------------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    # named ops -------------------------------------------------------
    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def square(self):
        return square(self)

    def abs(self):
        return absolute(self)

    def reciprocal(self):
        return reciprocal(self)

    def clip_min(self, floor):
        return clip_min(self, floor)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis)

    def max(self, axis=None):
        return reduce_max(self, axis)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self):
        return transpose(self)

    def broadcast_to(self, shape):
        return broadcast_to(self, shape)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _contiguous(arr: np.ndarray) -> np.ndarray:
    """C-contiguous float64 view or copy; preserves 0-d scalars
    (np.ascontiguousarray would promote them to 1-d)."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim > 0 and not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    return arr


def _finish(op: str, data: np.ndarray, inputs: tuple, backward) -> Tensor:
    """Validate an op output, wrap it, and record it on the active tape."""
    if not np.all(np.isfinite(data)):
        raise NumericDomainError(f"op '{op}' produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = _contiguous(data)
    out.grad = None
    out.requires_grad = False
    out.tape_id = None
    tape = active_tape()
    if tape is not None and not tape._consumed and any(
        t is not None and t.requires_grad for t in inputs
    ):
        out.requires_grad = True
        out.tape_id = tape.tape_id
        for t in inputs:
            if t is not None and t.requires_grad and t.tape_id is None:
                t.tape_id = tape.tape_id
        tape.nodes.append(_Node(op, out, inputs, backward))
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _split_operands(a, b):
    """Return (tensor, tensor-or-None, scalar-or-None) for mixed args."""
    if isinstance(b, Tensor):
        return a, b, None
    if isinstance(b, (int, float, np.floating, np.integer)):
        return a, None, float(b)
    raise ContractError(f"unsupported operand type {type(b).__name__}")


# ---------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a)
    a, bt, const = _split_operands(a, b)
    if bt is not None:
        _same_shape("add", a, bt)
        return _finish("add", a.data + bt.data, (a, bt), lambda g: (g, g))
    return _finish("add", a.data + const, (a,), lambda g: (g,))


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    a, bt, const = _split_operands(a, b)
    if bt is not None:
        _same_shape("sub", a, bt)
        return _finish("sub", a.data - bt.data, (a, bt), lambda g: (g, -g))
    return _finish("sub", a.data - const, (a,), lambda g: (g,))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    a, bt, const = _split_operands(a, b)
    if bt is not None:
        _same_shape("mul", a, bt)
        ad, bd = a.data, bt.data
        return _finish("mul", ad * bd, (a, bt), lambda g: (g * bd, g * ad))
    return _finish("mul", a.data * const, (a,), lambda g: (g * const,))


def div(a, b) -> Tensor:
    a = _as_tensor(a)
    a, bt, const = _split_operands(a, b)
    if bt is not None:
        _same_shape("div", a, bt)
        if np.any(bt.data == 0.0):
            raise NumericDomainError("div: division by zero")
        ad, bd = a.data, bt.data
        return _finish(
            "div", ad / bd, (a, bt), lambda g: (g / bd, -g * ad / (bd * bd))
        )
    if const == 0.0:
        raise NumericDomainError("div: division by zero")
    return _finish("div", a.data / const, (a,), lambda g: (g / const,))


def scale(a, factor: float) -> Tensor:
    """Multiply by a python scalar."""
    a = _as_tensor(a)
    factor = float(factor)
    return _finish("scale", a.data * factor, (a,), lambda g: (g * factor,))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0.0  # subgradient at 0 is 0
    return _finish("relu", np.maximum(a.data, 0.0), (a,), lambda g: (g * mask,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(over="ignore"):  # overflow is caught by the finite check
        out = np.exp(a.data)
    return _finish("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise NumericDomainError("log: argument must be strictly positive")
    ad = a.data
    return _finish("log", np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0.0):
        raise NumericDomainError("sqrt: argument must be non-negative")
    out = np.sqrt(a.data)
    return _finish("sqrt", out, (a,), lambda g: (g * 0.5 / out,))


def square(a) -> Tensor:
    a = _as_tensor(a)
    ad = a.data
    return _finish("square", ad * ad, (a,), lambda g: (g * 2.0 * ad,))


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)  # subgradient at 0 is 0
    return _finish("abs", np.abs(a.data), (a,), lambda g: (g * sign,))


def reciprocal(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data == 0.0):
        raise NumericDomainError("reciprocal: argument must be nonzero")
    out = 1.0 / a.data
    return _finish("reciprocal", out, (a,), lambda g: (-g * out * out,))


def clip_min(a, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient passes only where a > floor."""
    a = _as_tensor(a)
    floor = float(floor)
    mask = a.data > floor
    return _finish(
        "clip_min", np.maximum(a.data, floor), (a,), lambda g: (g * mask,)
    )


# ---------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    old = a.shape
    return _finish(
        "reshape",
        a.data.reshape(shape),
        (a,),
        lambda g: (np.ascontiguousarray(g.reshape(old)),),
    )


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    return _finish(
        "transpose", a.data.T, (a,), lambda g: (np.ascontiguousarray(g.T),)
    )


def slice_rows(a, start: int, stop: int) -> Tensor:
    """Rows [start, stop) along axis 0; the gradient scatters back into
    a zero buffer of the input's shape."""
    a = _as_tensor(a)
    start, stop = int(start), int(stop)
    if not 0 <= start < stop <= a.shape[0]:
        raise DimensionError(
            f"slice_rows: [{start}, {stop}) invalid for {a.shape[0]} rows"
        )
    shape = a.shape

    def bwd(g):
        out = np.zeros(shape, dtype=np.float64)
        out[start:stop] = g
        return (out,)

    return _finish("slice_rows", a.data[start:stop].copy(), (a,), bwd)


def broadcast_to(a, shape) -> Tensor:
    """Explicitly expand size-1 or missing leading axes to ``shape``.

    The gradient sums over the expanded axes. This is the only shaped
    broadcast in the engine; arithmetic ops require matching shapes.
    """
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError as err:
        raise DimensionError(f"broadcast_to: {a.shape} -> {shape}") from err
    old = a.shape
    n_new = len(shape) - len(old)

    def bwd(g):
        g = g.sum(axis=tuple(range(n_new)))
        expanded = tuple(i for i, s in enumerate(old) if s == 1 and shape[n_new + i] != 1)
        if expanded:
            g = g.sum(axis=expanded, keepdims=True)
        return (np.ascontiguousarray(g),)

    return _finish("broadcast_to", out, (a,), bwd)


# ---------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------

def _check_axis(a: Tensor, axis) -> int | None:
    if axis is None:
        return None
    axis = int(axis)
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"axis {axis} invalid for shape {a.shape}")
    return axis % a.ndim


def reduce_sum(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    axis = _check_axis(a, axis)
    shape = a.shape

    if axis is None:
        def bwd(g):
            return (np.full(shape, float(g), dtype=np.float64),)
        return _finish("sum", a.data.sum(), (a,), bwd)

    def bwd_axis(g):
        return (np.ascontiguousarray(np.broadcast_to(np.expand_dims(g, axis), shape)),)

    return _finish("sum", a.data.sum(axis=axis), (a,), bwd_axis)


def reduce_mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    axis = _check_axis(a, axis)
    shape = a.shape

    if axis is None:
        n = a.data.size
        def bwd(g):
            return (np.full(shape, float(g) / n, dtype=np.float64),)
        return _finish("mean", a.data.mean(), (a,), bwd)

    n = shape[axis]

    def bwd_axis(g):
        return (
            np.ascontiguousarray(np.broadcast_to(np.expand_dims(g / n, axis), shape)),
        )

    return _finish("mean", a.data.mean(axis=axis), (a,), bwd_axis)


def reduce_max(a, axis=None) -> Tensor:
    """Max reduction; the gradient routes to the first argmax."""
    a = _as_tensor(a)
    axis = _check_axis(a, axis)
    data = a.data

    if axis is None:
        flat_idx = int(np.argmax(data))
        shape = a.shape

        def bwd(g):
            out = np.zeros(shape, dtype=np.float64)
            out.flat[flat_idx] = float(g)
            return (out,)

        return _finish("max", data.max(), (a,), bwd)

    idx = np.expand_dims(np.argmax(data, axis=axis), axis)
    shape = a.shape

    def bwd_axis(g):
        out = np.zeros(shape, dtype=np.float64)
        np.put_along_axis(out, idx, np.expand_dims(g, axis), axis=axis)
        return (out,)

    return _finish("max", data.max(axis=axis), (a,), bwd_axis)


def trace(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"trace expects a square matrix, got {a.shape}")
    n = a.shape[0]
    return _finish(
        "trace",
        np.trace(a.data),
        (a,),
        lambda g: (np.eye(n, dtype=np.float64) * float(g),),
    )


# ---------------------------------------------------------------------
# linear algebra and convolution
# ---------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"matmul expects matrices, got shapes {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dims {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = ad.T @ g if b.requires_grad else None
        return (ga, gb)

    return _finish("matmul", ad @ bd, (a, b), bwd)


def linear(x, weight, bias) -> Tensor:
    """Affine map ``x @ weight + bias`` with weight (in, out), bias (out,)."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1:
        raise DimensionError(
            f"linear: bad ranks {x.shape}, {weight.shape}, {bias.shape}"
        )
    if x.shape[1] != weight.shape[0] or weight.shape[1] != bias.shape[0]:
        raise DimensionError(
            f"linear: incompatible shapes {x.shape}, {weight.shape}, {bias.shape}"
        )
    xd, wd = x.data, weight.data

    def bwd(g):
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.T @ g if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return (gx, gw, gb)

    return _finish("linear", xd @ wd + bias.data, (x, weight, bias), bwd)


def conv1d(x, weight, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation convolution over the last axis.

    x: (B, Cin, L); weight: (Cout, Cin, K); bias: (Cout,).
    Output length is floor((L + 2*padding - K) / stride) + 1.
    """
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    stride, padding = int(stride), int(padding)
    if stride < 1 or padding < 0:
        raise ContractError(f"conv1d: stride {stride}, padding {padding}")
    if x.ndim != 3 or weight.ndim != 3 or bias.ndim != 1:
        raise DimensionError(
            f"conv1d: bad ranks {x.shape}, {weight.shape}, {bias.shape}"
        )
    batch, c_in, length = x.shape
    c_out, c_in_w, kernel = weight.shape
    if c_in_w != c_in:
        raise DimensionError(f"conv1d: {c_in} input channels vs weight {c_in_w}")
    if bias.shape[0] != c_out:
        raise DimensionError(f"conv1d: bias {bias.shape} vs {c_out} filters")
    l_out = (length + 2 * padding - kernel) // stride + 1
    if l_out < 1:
        raise DimensionError(
            f"conv1d: kernel {kernel} with padding {padding} exceeds length {length}"
        )

    xp = x.data if padding == 0 else np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    windows = sliding_window_view(xp, kernel, axis=2)[:, :, ::stride, :]
    # (B, Cin, Lout, K) -> (B*Lout, Cin*K) column matrix, reused in backward
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(
        batch * l_out, c_in * kernel
    )
    wmat = weight.data.reshape(c_out, c_in * kernel)
    out = (cols @ wmat.T).reshape(batch, l_out, c_out).transpose(0, 2, 1)
    out = out + bias.data[None, :, None]

    def bwd(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(batch * l_out, c_out)
        gw = (gmat.T @ cols).reshape(c_out, c_in, kernel) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2)) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            # scatter in time-major layout so the channel axis stays
            # contiguous on both sides of the overlapped adds
            wmat_t = weight.data.transpose(0, 2, 1).reshape(c_out, kernel * c_in)
            dcols = (gmat @ wmat_t).reshape(batch, l_out, kernel, c_in)
            gxp_t = np.zeros((batch, length + 2 * padding, c_in))
            for k in range(kernel):
                gxp_t[:, k : k + stride * l_out : stride, :] += dcols[:, :, k, :]
            if padding:
                gxp_t = gxp_t[:, padding:-padding, :]
            gx = np.ascontiguousarray(gxp_t.transpose(0, 2, 1))
        return (gx, gw, gb)

    return _finish("conv1d", out, (x, weight, bias), bwd)
