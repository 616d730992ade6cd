"""Dense tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Every operation in this module returns
a new tensor that remembers its parents and a closure mapping the output
gradient to parent gradients. :func:`backward` orders the recorded graph
topologically (a :class:`GradTape`) and runs the closures once each, in
reverse, accumulating into the ``grad`` buffers of leaf tensors.

Training runs in float32; :func:`precision` switches the default dtype to
float64, which is what :func:`grad_check` uses so that central differences
are accurate enough to compare against.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, InvalidMaskError, ConfigError, OracleError

MASK_SENTINEL = -1e30

_state = {"dtype": np.float32, "grad": True}


def get_dtype():
    return _state["dtype"]


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype used for new tensors and parameters."""
    previous = _state["dtype"]
    _state["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _state["dtype"] = previous


@contextlib.contextmanager
def no_grad():
    """Disable graph recording; results are constants."""
    previous = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = previous


def grad_enabled():
    return _state["grad"]


class Tensor:
    """Array value participating in a differentiation graph.

    Leaf tensors created with ``requires_grad=True`` own a ``grad`` buffer of
    the same shape; intermediate results only carry their backward closure.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        self.data = np.array(data, dtype=dtype or get_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = ()
        self._backward = None
        self.name = name

    @classmethod
    def _result(cls, data, parents, backward):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        track = _state["grad"] and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"expected a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def make_op(data, parents, backward):
    """Wrap ``data`` as the result of a primitive operation.

    ``backward(g)`` must return one gradient (or None) per parent, each shaped
    like that parent. Other modules use this to define fused primitives.
    """
    return Tensor._result(data, parents, backward)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise -----------------------------------------------------------


def add(a, b):
    a, b = _pair(a, b)
    _broadcast_shape(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_op(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = _pair(a, b)
    _broadcast_shape(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_op(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = _pair(a, b)
    _broadcast_shape(a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_op(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = _pair(a, b)
    _broadcast_shape(a, b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_op(out, (a, b), backward)


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def relu(x):
    # subgradient at exactly 0 is 0
    positive = x.data > 0

    def backward(g):
        return (g * positive,)

    return make_op(np.where(positive, x.data, 0).astype(x.dtype, copy=False), (x,), backward)


def sigmoid(x):
    out = _sigmoid(x.data)

    def backward(g):
        return (g * out * (1 - out),)

    return make_op(out, (x,), backward)


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep saturated values strictly inside (0, 1) instead of rounding onto the ends
    info = np.finfo(out.dtype)
    return np.clip(out, info.tiny, 1.0 - info.epsneg, out=out)


def softplus(x):
    """log(1 + exp(x)) evaluated without overflow."""
    z = x.data
    out = np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))

    def backward(g):
        return (g * _sigmoid(z),)

    return make_op(out, (x,), backward)


def exp(x):
    out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return make_op(out, (x,), backward)


def log(x):
    if np.any(x.data <= 0):
        raise ContractError("log of a non-positive value")

    def backward(g):
        return (g / x.data,)

    return make_op(np.log(x.data), (x,), backward)


def elementwise(op, *operands):
    """Dispatch ``op`` (add, sub, mul, relu, sigmoid) by name."""
    table = {"add": add, "sub": sub, "mul": mul, "relu": relu, "sigmoid": sigmoid}
    if op not in table:
        raise ContractError(f"unknown elementwise op {op!r}")
    return table[op](*operands)


def where(mask, x, fill):
    """``x`` where ``mask`` is true, the constant ``fill`` elsewhere."""
    mask = np.asarray(mask, dtype=bool)
    try:
        keep = np.broadcast_to(mask, x.shape)
    except ValueError:
        raise DimensionError(f"mask shape {mask.shape} does not broadcast to {x.shape}") from None
    out = np.where(keep, x.data, np.asarray(fill, dtype=x.dtype))

    def backward(g):
        return (g * keep,)

    return make_op(out, (x,), backward)


# -- shape and reduction ---------------------------------------------------


def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul shape mismatch: {a.shape} and {b.shape}") from None

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return make_op(out, (a, b), backward)


def tsum(x, axis=None, keepdims=False):
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_op(np.asarray(out, dtype=x.dtype), (x,), backward)


def mean(x, axis=None, keepdims=False):
    count = x.size if axis is None else np.prod([x.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / count)


def reshape(x, shape):
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} to {tuple(shape)}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return make_op(out, (x,), backward)


def transpose(x, axes=None):
    if axes is None:
        axes = tuple(range(x.ndim))[::-1]
    inverse = np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inverse),)

    return make_op(np.transpose(x.data, axes), (x,), backward)


def swapaxes(x, a1, a2):
    axes = list(range(x.ndim))
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return transpose(x, tuple(axes))


def getitem(x, key):
    """Basic or advanced numpy indexing; gradients scatter back."""
    out = x.data[key]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        return (gx,)

    return make_op(np.array(out, copy=True), (x,), backward)


def concat(tensors, axis=-1):
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of an empty list")
    if len(tensors) == 1:
        return tensors[0]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            shapes = ", ".join(str(s.shape) for s in tensors)
            raise DimensionError(f"concat along axis {axis}: incompatible shapes {shapes}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return make_op(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def take_rows(table, ids):
    """Gather ``table[ids]`` along the first axis (embedding lookup)."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"row id out of range for table with {table.shape[0]} rows")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, *table.shape[1:]))
        return (gt,)

    return make_op(table.data[ids], (table,), backward)


def masked_max(x, mask, axis):
    """Maximum over ``axis`` ignoring positions where ``mask`` is false.

    ``mask`` has the shape of ``x`` without its trailing feature axis. A slice
    with no valid position yields 0 and passes no gradient.
    """
    mask = np.asarray(mask, dtype=bool)
    axis = axis % x.ndim
    full = np.broadcast_to(mask[..., None], x.shape)
    z = np.where(full, x.data, -np.inf)
    idx = np.expand_dims(np.argmax(z, axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis)
    valid = np.take_along_axis(full, idx, axis=axis)
    out = np.where(valid, out, 0).astype(x.dtype, copy=False)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis) * valid, axis=axis)
        return (gx,)

    return make_op(np.squeeze(out, axis), (x,), backward)


# -- normalizations --------------------------------------------------------


def _valid_mask(mask, shape):
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    try:
        full = np.broadcast_to(mask, shape)
    except ValueError:
        raise DimensionError(f"mask shape {mask.shape} does not broadcast to {shape}") from None
    if not full.any(axis=-1).all():
        raise InvalidMaskError("softmax row with every position masked")
    return full


def softmax_masked(x, mask=None):
    """Softmax over the last axis; masked positions come out exactly 0."""
    full = _valid_mask(mask, x.shape)
    z = x.data if full is None else np.where(full, x.data, MASK_SENTINEL)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    if full is not None:
        e = e * full
    out = (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype, copy=False)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_op(out, (x,), backward)


def log_softmax(x, mask=None):
    """Log-softmax over the last axis; masked outputs are 0 with no gradient."""
    full = _valid_mask(mask, x.shape)
    z = x.data if full is None else np.where(full, x.data, MASK_SENTINEL)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = shifted - np.log(e.sum(axis=-1, keepdims=True))
    probs = np.exp(out)
    if full is not None:
        out = np.where(full, out, 0)
        probs = probs * full

    def backward(g):
        if full is not None:
            g = g * full
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return make_op(out.astype(x.dtype, copy=False), (x,), backward)


def layer_norm(x, gain, bias, eps=1e-6):
    """Normalize the last axis to zero mean and unit variance, then scale and shift."""
    if eps <= 0:
        raise ConfigError("layer_norm eps must be positive")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm gain/bias {gain.shape}/{bias.shape} for width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        gx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_op(out.astype(x.dtype, copy=False), (x, gain, bias), backward)


def dropout(x, p, training, rng):
    """Inverted dropout: survivors scaled by 1/(1-p) so inference is identity."""
    if not 0 <= p < 1:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)

    def backward(g):
        return (g * keep,)

    return make_op(x.data * keep, (x,), backward)


def depthwise_conv1d(x, filters):
    """Per-channel convolution along the sequence axis with 'same' zero padding.

    ``x`` is (..., n, d) and ``filters`` is (kernel, d) with an odd kernel.
    ``out[..., i, c] = sum_t xpad[..., i + t, c] * filters[t, c]``.
    """
    k, d = filters.shape
    if k % 2 == 0:
        raise ConfigError(f"kernel width must be odd, got {k}")
    if x.shape[-1] != d:
        raise DimensionError(f"conv filters {filters.shape} for input {x.shape}")
    n = x.shape[-2]
    half = (k - 1) // 2
    pad = [(0, 0)] * (x.ndim - 2) + [(half, half), (0, 0)]
    xpad = np.pad(x.data, pad)
    w = filters.data
    out = np.zeros_like(x.data)
    for t in range(k):
        out += xpad[..., t:t + n, :] * w[t]

    def backward(g):
        gx = gw = None
        if x.requires_grad:
            gpad = np.zeros_like(xpad)
            for t in range(k):
                gpad[..., t:t + n, :] += g * w[t]
            gx = gpad[..., half:half + n, :]
        if filters.requires_grad:
            flat_g = g.reshape(-1, n, d)
            flat_x = xpad.reshape(-1, n + 2 * half, d)
            gw = np.stack([(flat_g * flat_x[:, t:t + n, :]).sum(axis=(0, 1)) for t in range(k)])
        return gx, gw

    return make_op(out, (x, filters), backward)


# -- differentiation -------------------------------------------------------


class GradTape:
    """Topologically ordered list of the ops reachable from a root tensor."""

    def __init__(self, root):
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.nodes = order

    def __len__(self):
        return len(self.nodes)


def backward(loss):
    """Populate ``grad`` on every leaf that ``loss`` depends on.

    Gradients accumulate across calls; reset leaves with ``zero_grad``.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring grad")
    tape = GradTape(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return tape


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    analytic: list
    numeric: list


def grad_check(f: Callable, x, h: float = 1e-5, tol: float = 1e-4, floor: float = 1e-5):
    """Compare analytic gradients with central finite differences.

    ``x`` is a tensor or a sequence of tensors; ``f`` receives them as
    positional arguments and returns a scalar tensor. Per element the error is
    ``|a - n| / max(|a| + |n|, floor)``; the report holds the maximum.
    Run this under ``precision(np.float64)``.
    """
    inputs: Sequence[Tensor] = [x] if isinstance(x, Tensor) else list(x)
    for t in inputs:
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)

    def evaluate():
        with no_grad():
            value = f(*inputs)
        value = float(np.asarray(value.data).reshape(-1)[0])
        if not np.isfinite(value):
            raise OracleError("function value is not finite")
        return value

    evaluate()
    out = f(*inputs)
    if out.size != 1:
        raise ContractError(f"grad_check needs a scalar function, got shape {out.shape}")
    if out.requires_grad:
        backward(out)
    analytic = [t.grad.copy() for t in inputs]
    numeric = []
    for t in inputs:
        num = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = evaluate()
            flat[i] = orig - h
            down = evaluate()
            flat[i] = orig
            num.reshape(-1)[i] = (up - down) / (2 * h)
        numeric.append(num)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        if a.size:
            err = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)
            worst = max(worst, float(err.max()))
    return GradCheckReport(worst, worst <= tol, analytic, numeric)
