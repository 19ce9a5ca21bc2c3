"""Dense float64 tensors with reverse-mode automatic differentiation.

Operations executed while a :class:`Tape` is active append backward records;
``Tape.backward`` replays them exactly once in reverse order. Every operation
checks its output for NaN/Inf and raises instead of letting bad values travel
through training. Tensors are immutable after construction except through the
optimizer step; independent tapes on different threads never share state.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import (
    ContractError,
    DegenerateVectorError,
    NumericOverflowError,
    ParameterError,
    ShapeError,
)

Array = np.ndarray

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _check_finite(arr: Array, op: str) -> Array:
    if not np.all(np.isfinite(arr)):
        raise NumericOverflowError(f"{op} produced non-finite values")
    return arr


class Tensor:
    """Row-major float64 tensor, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        self.data: Array = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- differentiable views -------------------------------------------------

    def __getitem__(self, key) -> "Tensor":
        _validate_slice_key(key)
        out = np.asarray(self.data[key])

        def backward_fn(g: Array):
            gx = np.zeros_like(self.data)
            gx[key] = g  # slice/int keys never alias, plain assignment is exact
            return (gx,)

        return _apply("slice", (self,), out, backward_fn)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        out = self.data.reshape(shape)

        def backward_fn(g: Array):
            return (g.reshape(old),)

        return _apply("reshape", (self,), out, backward_fn)

    def transpose(self, axes: Sequence[int] | None = None) -> "Tensor":
        out = np.transpose(self.data, axes)
        inv = None if axes is None else tuple(np.argsort(axes))

        def backward_fn(g: Array):
            return (np.transpose(g, inv),)

        return _apply("transpose", (self,), out, backward_fn)

    def sum(self, axis: int | None = None) -> "Tensor":
        return tensor_sum(self, axis)

    def mean(self, axis: int | None = None) -> "Tensor":
        return tensor_mean(self, axis)

    # -- operator sugar -------------------------------------------------------

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class _Record:
    __slots__ = ("output", "inputs", "backward_fn")

    def __init__(self, output: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


_LOCAL = threading.local()


def _stack() -> list:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


@contextlib.contextmanager
def no_grad():
    """Suppress recording inside an active tape (e.g. frozen-path forward)."""
    _stack().append(None)
    try:
        yield
    finally:
        _stack().pop()


class Tape:
    """Topologically ordered op records, consumed by a single backward pass."""

    def __init__(self):
        self._records: list[_Record] = []
        self._produced: set[int] = set()
        self._consumed = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _stack().pop()
        if popped is not self:
            raise ContractError("tape stack corrupted: unbalanced enter/exit")
        return False

    def __len__(self) -> int:
        return len(self._records)

    def record(self, output: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> None:
        self._records.append(_Record(output, inputs, backward_fn))
        self._produced.add(id(output))

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(leaf) into every requires_grad leaf; consume the tape."""
        if self._consumed:
            raise ContractError("tape already consumed by a previous backward pass")
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise ContractError("loss was not produced on this tape")

        grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self._records):
            g_out = grads.pop(id(rec.output), None)
            if g_out is None:
                continue
            input_grads = rec.backward_fn(g_out)
            for tensor, grad in zip(rec.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if id(tensor) in self._produced:
                    acc = grads.get(id(tensor))
                    grads[id(tensor)] = grad if acc is None else acc + grad
                else:
                    if tensor.grad is None:
                        tensor.grad = np.zeros_like(tensor.data)
                    tensor.grad = tensor.grad + grad
        self._records.clear()
        self._produced.clear()
        self._consumed = True


def backward(loss: Tensor) -> None:
    """Backward through the innermost active tape."""
    tape = active_tape()
    if tape is None:
        raise ContractError("backward() called with no active tape")
    tape.backward(loss)


def _apply(op: str, inputs: tuple[Tensor, ...], out_data: Array, backward_fn: Callable) -> Tensor:
    out = Tensor(_check_finite(out_data, op))
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, backward_fn)
    return out


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _validate_slice_key(key) -> None:
    parts = key if isinstance(key, tuple) else (key,)
    for part in parts:
        if not isinstance(part, (int, np.integer, slice)):
            raise ContractError(
                "tensor slicing accepts ints and slices only; use gather_rows for index arrays"
            )


# -- elementwise arithmetic ---------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data + b.data

    def backward_fn(g: Array):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return _apply("add", (a, b), out, backward_fn)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data - b.data

    def backward_fn(g: Array):
        return (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))

    return _apply("sub", (a, b), out, backward_fn)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data * b.data

    def backward_fn(g: Array):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return (ga, gb)

    return _apply("mul", (a, b), out, backward_fn)


def div(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def backward_fn(g: Array):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = (
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
            if b.requires_grad
            else None
        )
        return (ga, gb)

    return _apply("div", (a, b), out, backward_fn)


def log(x) -> Tensor:
    x = _coerce(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)

    def backward_fn(g: Array):
        return (g / x.data,)

    return _apply("log", (x,), out, backward_fn)


def exp(x) -> Tensor:
    x = _coerce(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)

    def backward_fn(g: Array):
        return (g * out,)

    return _apply("exp", (x,), out, backward_fn)


# -- linear algebra -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def backward_fn(g: Array):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return (ga, gb)

    return _apply("matmul", (a, b), out, backward_fn)


def conv1d_causal(x, weight, dilation: int = 1) -> Tensor:
    """Causal dilated 1-D convolution.

    ``x`` is ``(..., C_in, T)``, ``weight`` is ``(C_out, C_in, K)``; tap ``k``
    multiplies the input ``k * dilation`` steps in the past, so output position
    ``t`` never depends on inputs after ``t``. The input is left-padded with
    ``(K - 1) * dilation`` zeros and output length equals input length.
    """
    x, weight = _coerce(x), _coerce(weight)
    if not isinstance(dilation, (int, np.integer)) or isinstance(dilation, bool) or dilation < 1:
        raise ParameterError(f"dilation must be a positive int, got {dilation!r}")
    if weight.ndim != 3:
        raise ShapeError(f"conv weight must be (C_out, C_in, K), got {weight.shape}")
    c_out, c_in, kernel = weight.shape
    if kernel < 1:
        raise ParameterError("kernel must be >= 1")
    if x.ndim < 2 or x.shape[-2] != c_in:
        raise ShapeError(f"conv input {x.shape} does not match C_in={c_in}")
    t_len = x.shape[-1]
    pad = (kernel - 1) * dilation
    xp = np.concatenate(
        [np.zeros(x.shape[:-1] + (pad,), dtype=np.float64), x.data], axis=-1
    )
    out = np.zeros(x.shape[:-2] + (c_out, t_len), dtype=np.float64)
    for k in range(kernel):
        off = (kernel - 1 - k) * dilation  # tap k reaches k*dilation back in time
        out += np.einsum("oi,...it->...ot", weight.data[:, :, k], xp[..., off : off + t_len])

    def backward_fn(g: Array):
        gx = gw = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for k in range(kernel):
                off = (kernel - 1 - k) * dilation
                gxp[..., off : off + t_len] += np.einsum(
                    "oi,...ot->...it", weight.data[:, :, k], g
                )
            gx = gxp[..., pad:]
        if weight.requires_grad:
            gw = np.zeros_like(weight.data)
            g_flat = g.reshape(-1, c_out, t_len)
            xp_flat = xp.reshape(-1, c_in, pad + t_len)
            for k in range(kernel):
                off = (kernel - 1 - k) * dilation
                gw[:, :, k] = np.einsum(
                    "bot,bit->oi", g_flat, xp_flat[:, :, off : off + t_len]
                )
        return (gx, gw)

    return _apply("conv1d_causal", (x, weight), out, backward_fn)


# -- normalization and activations --------------------------------------------


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = _coerce(x), _coerce(gain), _coerce(bias)
    if eps <= 0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gain.data + bias.data

    def backward_fn(g: Array):
        gx = None
        if x.requires_grad:
            dxhat = g * gain.data
            gx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        gg = (g * xhat).reshape(-1, d).sum(axis=0) if gain.requires_grad else None
        gb = g.reshape(-1, d).sum(axis=0) if bias.requires_grad else None
        return (gx, gg, gb)

    return _apply("layer_norm", (x, gain, bias), out, backward_fn)


def gelu(x) -> Tensor:
    x = _coerce(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def backward_fn(g: Array):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _apply("gelu", (x,), out, backward_fn)


def leaky_relu(x, slope: float = 0.01) -> Tensor:
    x = _coerce(x)
    mask = x.data > 0
    out = np.where(mask, x.data, slope * x.data)

    def backward_fn(g: Array):
        return (g * np.where(mask, 1.0, slope),)

    return _apply("leaky_relu", (x,), out, backward_fn)


def softmax(x, axis: int = -1) -> Tensor:
    x = _coerce(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g: Array):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _apply("softmax", (x,), out, backward_fn)


# -- reductions ----------------------------------------------------------------


def tensor_sum(x, axis: int | None = None) -> Tensor:
    x = _coerce(x)
    out = np.asarray(x.data.sum(axis=axis))

    def backward_fn(g: Array):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _apply("sum", (x,), out, backward_fn)


def tensor_mean(x, axis: int | None = None) -> Tensor:
    x = _coerce(x)
    out = np.asarray(x.data.mean(axis=axis))
    count = x.size if axis is None else x.shape[axis]

    def backward_fn(g: Array):
        scaled = g / count
        if axis is None:
            return (np.broadcast_to(scaled, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(scaled, axis), x.shape).copy(),)

    return _apply("mean", (x,), out, backward_fn)


def max_pool_over_time(x) -> Tensor:
    """Global max over the trailing (time) axis; ties route to the first max."""
    x = _coerce(x)
    if x.ndim < 1 or x.shape[-1] < 1:
        raise ShapeError(f"max_pool_over_time needs a non-empty time axis, got {x.shape}")
    idx = np.argmax(x.data, axis=-1)
    out = np.take_along_axis(x.data, idx[..., None], axis=-1)[..., 0]

    def backward_fn(g: Array):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx[..., None], np.asarray(g)[..., None], axis=-1)
        return (gx,)

    return _apply("max_pool_over_time", (x,), out, backward_fn)


def l2_norm(x) -> Tensor:
    """Euclidean norm of the flattened tensor (scalar output)."""
    x = _coerce(x)
    norm = float(np.sqrt(np.sum(x.data * x.data)))

    def backward_fn(g: Array):
        if norm == 0.0:
            raise DegenerateVectorError("l2_norm gradient undefined at the zero vector")
        return (np.asarray(g) * x.data / norm,)

    return _apply("l2_norm", (x,), np.asarray(norm), backward_fn)


# -- gather / concat -----------------------------------------------------------


def gather_rows(x, indices) -> Tensor:
    """Embedding-style row lookup with scatter-add backward."""
    x = _coerce(x)
    idx = np.asarray(indices, dtype=np.int64)
    if x.ndim < 1:
        raise ShapeError("gather_rows needs at least one axis")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(
            f"gather_rows indices out of range [0, {x.shape[0]}): {idx.min()}..{idx.max()}"
        )
    out = x.data[idx]

    def backward_fn(g: Array):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _apply("gather_rows", (x,), out, backward_fn)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    if not ts:
        raise ShapeError("concat needs at least one tensor")
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def backward_fn(g: Array):
        return tuple(np.split(g, offsets, axis=axis))

    return _apply("concat", tuple(ts), out, backward_fn)


def dot(u, v) -> Tensor:
    """Inner product of two vectors, composed from mul and sum."""
    return tensor_sum(mul(u, v))
