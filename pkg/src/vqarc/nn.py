"""Parameter containers and initializers on top of :mod:`vqarc.tensor`."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, get_dtype, matmul


def parameter(data, name=None):
    return Tensor(np.asarray(data), requires_grad=True, name=name, dtype=get_dtype())


def glorot(rng, shape, fan_in=None, fan_out=None):
    """Uniform Glorot initializer; fans default to the last two extents."""
    fan_in = fan_in if fan_in is not None else shape[-2] if len(shape) > 1 else shape[0]
    fan_out = fan_out if fan_out is not None else shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-limit, limit, size=shape))


def zeros(shape):
    return parameter(np.zeros(shape))


def ones(shape):
    return parameter(np.ones(shape))


class Module:
    """Holds parameters and child modules as attributes.

    ``named_parameters`` walks attributes in definition order, so names are
    stable and can key a checkpoint.
    """

    training = True

    def named_parameters(self, prefix=""):
        seen = set()
        for key, value in vars(self).items():
            for name, p in _walk(value, f"{prefix}{key}"):
                if id(p) not in seen:
                    seen.add(id(p))
                    yield name, p

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self, flag=True):
        self.training = flag
        for value in vars(self).values():
            for child in _children(value):
                child.train(flag)
        return self

    def eval(self):
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _walk(value, name):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


def _children(value):
    if isinstance(value, Module):
        yield value
    elif isinstance(value, (list, tuple)):
        for item in value:
            yield from _children(item)


class Linear(Module):
    """``y = x W + b`` with ``W`` stored as (in, out)."""

    def __init__(self, rng, d_in, d_out, bias=True):
        self.weight = glorot(rng, (d_in, d_out))
        self.bias = zeros((d_out,)) if bias else None

    def forward(self, x):
        y = matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y
