import numpy as np
import pytest

from vqarc import tensor as T
from vqarc.encoder import (Encoder, EncoderConfig, depthwise_separable_conv, multi_head_self_attention,
                           positional_encoding)
from vqarc.errors import ConfigError

from conftest import assert_tensors_grad_ok
from oracles import naive_attention, naive_dsconv


class TestPositionalEncoding:
    def test_first_row(self):
        np.testing.assert_array_equal(positional_encoding(1, 6)[0], [0, 1, 0, 1, 0, 1])

    def test_range(self):
        pe = positional_encoding(200, 16)
        assert pe.min() >= -1 and pe.max() <= 1

    def test_value(self):
        assert positional_encoding(2, 4)[1, 0] == pytest.approx(0.841471, abs=1e-6)

    def test_odd_width(self):
        with pytest.raises(ConfigError):
            positional_encoding(3, 5)


class TestDepthwiseSeparableConv:
    def test_identity_kernel(self, rng):
        x = rng.normal(size=(5, 4))
        dw = np.zeros((3, 4))
        dw[1] = 1
        out = depthwise_separable_conv(T.Tensor(x), None, T.Tensor(dw), T.Tensor(np.eye(4)), T.Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.data, np.maximum(x, 0), rtol=1e-6)

    def test_zero_filters(self, rng):
        out = depthwise_separable_conv(T.Tensor(rng.normal(size=(5, 4))), None, T.Tensor(np.zeros((3, 4))),
                                       T.Tensor(np.zeros((4, 4))), T.Tensor(np.zeros(4)))
        assert not out.data.any()

    def test_matches_sliding_window(self, f64):
        for seed in range(100):
            r = np.random.default_rng(seed)
            n, d = int(r.integers(1, 7)), int(r.integers(1, 5))
            k = int(r.choice([1, 3, 5]))
            x, dw, pw, b = r.normal(size=(n, d)), r.normal(size=(k, d)), r.normal(size=(d, d)), r.normal(size=d)
            out = depthwise_separable_conv(T.Tensor(x), None, T.Tensor(dw), T.Tensor(pw), T.Tensor(b))
            np.testing.assert_allclose(out.data, naive_dsconv(x, dw, pw, b), atol=1e-6)

    def test_masked_positions(self, rng, f64):
        x = rng.normal(size=(5, 4))
        mask = np.array([True, True, True, False, False])
        args = [T.Tensor(rng.normal(size=(3, 4))), T.Tensor(rng.normal(size=(4, 4))), T.Tensor(rng.normal(size=4))]
        out = depthwise_separable_conv(T.Tensor(x), mask, *args).data
        assert not out[3:].any()
        x2 = x.copy()
        x2[3:] = 100.0
        np.testing.assert_array_equal(depthwise_separable_conv(T.Tensor(x2), mask, *args).data, out)

    def test_even_kernel(self):
        with pytest.raises(ConfigError):
            EncoderConfig(d=8, kernel=4)
        with pytest.raises(ConfigError):
            T.depthwise_conv1d(T.Tensor(np.ones((3, 2))), T.Tensor(np.ones((2, 2))))


class TestSelfAttention:
    def _weights(self, r, d):
        return [T.Tensor(r.normal(size=(d, d))) for _ in range(4)]

    def test_single_position(self, rng, f64):
        x = rng.normal(size=(1, 4))
        wq, wk, wv, wo = self._weights(rng, 4)
        out = multi_head_self_attention(T.Tensor(x), None, wq, wk, wv, wo, 2)
        np.testing.assert_allclose(out.data, x @ wv.data @ wo.data, atol=1e-12)

    def test_identical_positions(self, rng, f64):
        row = rng.normal(size=4)
        out = multi_head_self_attention(T.Tensor(np.stack([row, row])), None, *self._weights(rng, 4), 2).data
        np.testing.assert_allclose(out[0], out[1], atol=1e-12)

    def test_matches_per_head_oracle(self, f64):
        for seed in range(100):
            r = np.random.default_rng(seed)
            n = int(r.integers(1, 6))
            heads = int(r.choice([1, 2, 4]))
            d = heads * int(r.integers(1, 3))
            x = r.normal(size=(n, d))
            ws = [r.normal(size=(d, d)) for _ in range(4)]
            mask = r.random(n) < 0.7
            mask[0] = True
            out = multi_head_self_attention(T.Tensor(x), mask, *map(T.Tensor, ws), heads)
            np.testing.assert_allclose(out.data, naive_attention(x, *ws, heads, mask), atol=1e-6)

    def test_indivisible(self, rng):
        with pytest.raises(ConfigError):
            multi_head_self_attention(T.Tensor(np.ones((2, 6))), None, *self._weights(rng, 6), 4)


def _encoder(rng, d=8, blocks=1, conv_layers=2):
    with T.precision(np.float64):
        return Encoder(rng, EncoderConfig(d=d, heads=2, conv_layers=conv_layers, kernel=3, blocks=blocks,
                                          ff_hidden=6))


class TestEncoder:
    def test_zero_branches_give_input_plus_pe(self, rng):
        enc = _encoder(rng)
        for block in enc.blocks:
            for conv in block.convs:
                conv.pointwise.data[...] = 0
            block.attention.wo.data[...] = 0
            block.ff.outer.weight.data[...] = 0
            block.ff.outer.bias.data[...] = 0
        x = rng.normal(size=(5, 8))
        np.testing.assert_allclose(enc(T.Tensor(x, dtype=np.float64)).data, x + positional_encoding(5, 8),
                                   atol=1e-12)

    def test_shape(self, rng):
        enc = _encoder(rng, blocks=2)
        for n in (1, 3, 9):
            assert enc(T.Tensor(rng.normal(size=(2, n, 8)))).shape == (2, n, 8)

    def test_masked_tail_does_not_leak(self, rng):
        enc = _encoder(rng, blocks=2)
        x = rng.normal(size=(6, 8))
        mask = np.array([True] * 4 + [False] * 2)
        a = enc(T.Tensor(x, dtype=np.float64), mask).data
        x[4:] = rng.normal(scale=50, size=(2, 8))
        b = enc(T.Tensor(x, dtype=np.float64), mask).data
        np.testing.assert_allclose(a[:4], b[:4], atol=1e-12)

    def test_padding_matches_unpadded(self, rng):
        enc = _encoder(rng)
        x = rng.normal(size=(4, 8))
        padded = np.concatenate([x, np.zeros((3, 8))])
        mask = np.array([True] * 4 + [False] * 3)
        a = enc(T.Tensor(x, dtype=np.float64)).data
        b = enc(T.Tensor(padded, dtype=np.float64), mask).data
        np.testing.assert_allclose(a, b[:4], atol=1e-10)

    def test_gradient(self, rng):
        enc = _encoder(rng, conv_layers=1)
        x = T.Tensor(rng.normal(size=(3, 8)), dtype=np.float64)
        w = rng.normal(size=(3, 8))
        assert_tensors_grad_ok(lambda: T.tsum(enc(x) * w), [x, *enc.parameters()])

    def test_every_parameter_gets_gradient(self, rng):
        enc = _encoder(rng, blocks=2)
        x = T.Tensor(rng.normal(size=(2, 5, 8)), dtype=np.float64)
        T.backward(T.tsum(enc(x) * rng.normal(size=(2, 5, 8))))
        for name, p in enc.named_parameters():
            assert np.any(p.grad != 0), name

    def test_dropout_off_is_deterministic(self, rng):
        enc = _encoder(rng)
        enc.eval()
        x = T.Tensor(rng.normal(size=(4, 8)), dtype=np.float64)
        np.testing.assert_array_equal(enc(x, rng=rng).data, enc(x, rng=rng).data)
