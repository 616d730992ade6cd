"""Convolution + self-attention encoder shared by the embedding and model encoders.

One block is ``conv_layers`` depthwise-separable convolutions, one multi-head
self-attention layer and one feed-forward layer. Each sublayer sits inside a
pre-norm residual branch: ``x + f(layer_norm(x))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .nn import Linear, Module, glorot, ones, zeros


@dataclass
class EncoderConfig:
    d: int = 128
    heads: int = 4
    conv_layers: int = 4
    kernel: int = 7
    blocks: int = 1
    ff_hidden: int = 128
    dropout: float = 0.0

    def __post_init__(self):
        if self.d % self.heads:
            raise ConfigError(f"width {self.d} is not divisible by {self.heads} heads")
        if self.kernel % 2 == 0:
            raise ConfigError(f"kernel width must be odd, got {self.kernel}")
        if self.d % 2:
            raise ConfigError("positional encoding needs an even width")


def positional_encoding(n, d):
    """Sinusoidal table: sin at even columns, cos at odd ones, shape (n, d)."""
    if d % 2:
        raise ConfigError(f"positional encoding needs an even width, got {d}")
    pos = np.arange(n)[:, None]
    freq = 10000.0 ** (np.arange(0, d, 2) / d)
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(pos / freq)
    pe[:, 1::2] = np.cos(pos / freq)
    return pe


def _mask_rows(x, mask):
    if mask is None:
        return x
    return x * np.asarray(mask, dtype=x.dtype)[..., None]


def depthwise_separable_conv(x, mask, depthwise, pointwise, bias):
    """relu(pointwise(depthwise(x)) + bias), zero at masked positions.

    Masked inputs are zeroed first so padding never leaks into real tokens.
    """
    h = T.depthwise_conv1d(_mask_rows(x, mask), depthwise)
    return _mask_rows(T.relu(T.matmul(h, pointwise) + bias), mask)


def _split_heads(x, heads):
    *lead, n, d = x.shape
    return T.swapaxes(T.reshape(x, (*lead, n, heads, d // heads)), -2, -3)


def _merge_heads(x):
    *lead, h, n, dh = x.shape
    return T.reshape(T.swapaxes(x, -2, -3), (*lead, n, h * dh))


def multi_head_self_attention(x, mask, wq, wk, wv, wo, heads):
    """Scaled dot-product attention in ``heads`` groups of width d/heads."""
    d = x.shape[-1]
    if d % heads:
        raise ConfigError(f"width {d} is not divisible by {heads} heads")
    q = _split_heads(T.matmul(x, wq), heads)
    k = _split_heads(T.matmul(x, wk), heads)
    v = _split_heads(T.matmul(x, wv), heads)
    scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(d // heads))
    key_mask = None if mask is None else np.asarray(mask, dtype=bool)[..., None, None, :]
    weights = T.softmax_masked(scores, key_mask)
    return T.matmul(_merge_heads(T.matmul(weights, v)), wo)


class ConvLayer(Module):
    def __init__(self, rng, d, kernel):
        self.norm_gain, self.norm_bias = ones((d,)), zeros((d,))
        self.depthwise = glorot(rng, (kernel, d), fan_in=kernel, fan_out=kernel)
        self.pointwise = glorot(rng, (d, d))
        self.bias = zeros((d,))


class AttentionLayer(Module):
    def __init__(self, rng, d):
        self.norm_gain, self.norm_bias = ones((d,)), zeros((d,))
        self.wq = glorot(rng, (d, d))
        self.wk = glorot(rng, (d, d))
        self.wv = glorot(rng, (d, d))
        self.wo = glorot(rng, (d, d))


class FeedForward(Module):
    def __init__(self, rng, d, hidden):
        self.norm_gain, self.norm_bias = ones((d,)), zeros((d,))
        self.inner = Linear(rng, d, hidden)
        self.outer = Linear(rng, hidden, d)


class EncoderBlock(Module):
    def __init__(self, rng, cfg):
        self.convs = [ConvLayer(rng, cfg.d, cfg.kernel) for _ in range(cfg.conv_layers)]
        self.attention = AttentionLayer(rng, cfg.d)
        self.ff = FeedForward(rng, cfg.d, cfg.ff_hidden)


class Encoder(Module):
    """A stack of ``cfg.blocks`` encoder blocks with positional encoding."""

    def __init__(self, rng, cfg):
        self.cfg = cfg
        self.blocks = [EncoderBlock(rng, cfg) for _ in range(cfg.blocks)]

    def forward(self, x, mask=None, rng=None):
        return encoder_forward(x, mask, self.blocks, self.cfg, training=self.training, rng=rng)


def encoder_forward(x, mask, blocks, cfg, training=False, rng=None):
    if x.shape[-1] != cfg.d:
        raise DimensionError(f"encoder width {cfg.d} does not match input width {x.shape[-1]}")
    x = x + positional_encoding(x.shape[-2], cfg.d).astype(x.dtype)
    drop = cfg.dropout if training and rng is not None else 0.0

    def residual(x, branch):
        return x + T.dropout(branch, drop, drop > 0, rng)

    for block in blocks:
        for conv in block.convs:
            h = T.layer_norm(x, conv.norm_gain, conv.norm_bias)
            x = residual(x, depthwise_separable_conv(h, mask, conv.depthwise, conv.pointwise, conv.bias))
        att = block.attention
        h = T.layer_norm(x, att.norm_gain, att.norm_bias)
        x = residual(x, multi_head_self_attention(h, mask, att.wq, att.wk, att.wv, att.wo, cfg.heads))
        ff = block.ff
        h = T.layer_norm(x, ff.norm_gain, ff.norm_bias)
        x = residual(x, ff.outer(T.relu(ff.inner(h))))
    return x
