"""Input embedding block: word vector + character max-pool, then a highway.

Each token becomes ``[x_w, x_c]`` where ``x_w`` is its word row and ``x_c``
is the per-dimension maximum over its character vectors. A linear projection
brings the concatenation to model width before two highway layers.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .nn import Linear, Module, parameter
from .text import PAD


def lookup(table, ids, trainable=None):
    """Row lookup whose gradient is confined to rows flagged ``trainable``."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"id out of range for table with {table.shape[0]} rows")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        if trainable is not None:
            gt *= trainable[:, None]
        return (gt,)

    return T.make_op(table.data[ids], (table,), backward)


def embed_tokens(word_ids, char_ids, word_table, char_table, word_trainable=None, char_trainable=None):
    """Concatenate word rows with max-pooled character rows, shape (..., dw + dc).

    PAD characters do not take part in the max; a word made only of PAD
    characters gets ``x_c = 0``.
    """
    x_w = lookup(word_table, word_ids, word_trainable)
    chars = lookup(char_table, char_ids, char_trainable)
    x_c = T.masked_max(chars, np.asarray(char_ids) != PAD, axis=-2)
    return T.concat([x_w, x_c], axis=-1)


class HighwayLayer(Module):
    def __init__(self, rng, d):
        self.transform = Linear(rng, d, d)
        self.gate = Linear(rng, d, d)


def highway(x, layers):
    """``y = t * relu(x Wt + bt) + (1 - t) * x`` with ``t = sigmoid(x Wg + bg)``, per layer."""
    for layer in layers:
        d = layer.transform.weight.shape[0]
        if x.shape[-1] != d:
            raise DimensionError(f"highway width {d} does not match input width {x.shape[-1]}")
        t = T.sigmoid(layer.gate(x))
        h = T.relu(layer.transform(x))
        x = t * h + (1.0 - t) * x
    return x


class InputEmbedding(Module):
    """Word and character tables plus projection and two highway layers."""

    def __init__(self, rng, word_rows, char_rows, d, word_trainable=None, char_trainable=None,
                 layers=2):
        self.word = parameter(word_rows)
        self.char = parameter(char_rows)
        self.word_trainable = word_trainable
        self.char_trainable = char_trainable
        width = word_rows.shape[1] + char_rows.shape[1]
        self.proj = Linear(rng, width, d, bias=False) if width != d else None
        self.highway = [HighwayLayer(rng, d) for _ in range(layers)]

    def forward(self, word_ids, char_ids):
        x = embed_tokens(word_ids, char_ids, self.word, self.char,
                         self.word_trainable, self.char_trainable)
        if self.proj is not None:
            x = self.proj(x)
        return highway(x, self.highway)
