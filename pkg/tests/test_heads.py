import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vqarc import tensor as T
from vqarc.heads import (ClassificationHead, MultiChoiceHead, SpanHead, binary_logistic_loss, classification_head,
                         cross_entropy, decode_span, masked_mean, multichoice_head, span_head, span_loss)
from vqarc.errors import DimensionError, InvalidMaskError

from conftest import assert_tensors_grad_ok
from oracles import brute_decode


def ms(rng, n, d, batch=()):
    return [T.Tensor(rng.normal(size=(*batch, n, d)), dtype=np.float64) for _ in range(3)]


class TestSpanHead:
    def test_single_position(self, rng):
        ps, pe = span_head(*ms(rng, 1, 3), None, T.Tensor(rng.normal(size=6)), T.Tensor(rng.normal(size=6)))
        assert ps.data.tolist() == [1.0] and pe.data.tolist() == [1.0]

    def test_matches_formula(self, rng, f64):
        M0, M1, M2 = ms(rng, 5, 3)
        ws, we = rng.normal(size=6), rng.normal(size=6)
        ps, pe = span_head(M0, M1, M2, None, T.Tensor(ws), T.Tensor(we))
        a = np.concatenate([M0.data, M1.data], 1) @ ws
        b = np.concatenate([M0.data, M2.data], 1) @ we
        np.testing.assert_allclose(ps.data, np.exp(a) / np.exp(a).sum(), atol=1e-12)
        np.testing.assert_allclose(pe.data, np.exp(b) / np.exp(b).sum(), atol=1e-12)

    def test_masked_positions_zero(self, rng):
        mask = np.array([True, True, False])
        ps, pe = span_head(*ms(rng, 3, 2), mask, T.Tensor(rng.normal(size=4)), T.Tensor(rng.normal(size=4)))
        assert ps.data[2] == 0 and pe.data[2] == 0
        assert ps.data.sum() == pytest.approx(1, abs=1e-5)

    def test_gradient(self, rng):
        with T.precision(np.float64):
            head = SpanHead(rng, 3)
        Ms = ms(rng, 4, 3)
        mask = np.array([True, True, True, False])

        def loss():
            s, e = head(*Ms)
            return span_loss(s, e, mask, 1, 2)
        assert_tensors_grad_ok(loss, [*Ms, *head.parameters()])


class TestDecodeSpan:
    def test_hand_example(self):
        pred = decode_span([0.1, 0.6, 0.3], [0.2, 0.1, 0.7])
        assert (pred.start, pred.end) == (1, 2)
        assert pred.score == pytest.approx(0.42)

    def test_never_inverted(self):
        pred = decode_span([0.0, 1.0], [1.0, 0.0])
        assert pred.start <= pred.end

    def test_tie_break(self):
        pred = decode_span([0.5, 0.5], [0.5, 0.5])
        assert (pred.start, pred.end) == (0, 0)

    def test_max_span(self):
        pred = decode_span([1.0, 0, 0, 0], [0, 0, 0, 1.0], max_span=2)
        assert pred.end - pred.start <= 2

    def test_matches_brute_force(self):
        for seed in range(100):
            r = np.random.default_rng(seed)
            n = int(r.integers(1, 51))
            ps, pe = r.dirichlet(np.ones(n)), r.dirichlet(np.ones(n))
            if seed % 4 == 0:
                ps, pe = np.round(ps, 1), np.round(pe, 1)
            max_span = int(r.integers(0, 31))
            i, j, s = brute_decode(ps, pe, max_span)
            pred = decode_span(ps, pe, max_span)
            assert (pred.start, pred.end) == (i, j)
            assert pred.score == s


class TestClassificationHead:
    def test_single_class(self, rng):
        p = classification_head(*ms(rng, 4, 2), None, T.Tensor(rng.normal(size=(6, 1))))
        assert p.data.tolist() == [1.0]

    def test_zero_weights_uniform(self, rng):
        p = classification_head(*ms(rng, 4, 2), None, T.Tensor(np.zeros((6, 5))))
        np.testing.assert_allclose(p.data, 0.2, atol=1e-12)

    def test_hand_pooling(self, f64):
        M = T.Tensor([[1.0, 2.0], [3.0, 4.0], [100.0, 100.0]])
        np.testing.assert_allclose(masked_mean(M, np.array([True, True, False])).data, [2.0, 3.0])

    def test_empty_mask(self):
        with pytest.raises(InvalidMaskError):
            masked_mean(T.Tensor(np.ones((2, 2))), np.array([False, False]))

    def test_weight_shape(self, rng):
        with pytest.raises(DimensionError):
            classification_head(*ms(rng, 4, 2), None, T.Tensor(np.zeros((5, 3))))

    def test_gradient(self, rng):
        with T.precision(np.float64):
            head = ClassificationHead(rng, 3, 4)
        Ms = ms(rng, 4, 3, (2,))
        mask = np.array([[True] * 4, [True, True, False, False]])
        assert_tensors_grad_ok(lambda: cross_entropy(head(*Ms, mask), np.array([1, 3])),
                               [*Ms, *head.parameters()])


def _mc_inputs(rng, d, batch=()):
    return [T.Tensor(rng.normal(size=(*batch, d)), dtype=np.float64) for _ in range(4)]


class TestMultiChoiceHead:
    def test_zero_first_layer(self, rng):
        vs = _mc_inputs(rng, 2)
        score = multichoice_head(*vs, T.Tensor(np.zeros((8, 3))), T.Tensor(rng.normal(size=(3, 1))))
        assert score.e == 0 and score.probability == 0.5

    def test_hand_value(self, f64):
        v = [T.Tensor([1.0]), T.Tensor([2.0]), T.Tensor([-1.0]), T.Tensor([0.5])]
        W1 = T.Tensor(np.array([[1.0, -1.0], [0.0, 1.0], [2.0, 0.0], [0.0, 0.0]]))
        W2 = T.Tensor(np.array([[1.0], [0.5]]))
        # input order is [v0a, v1a, v0q, v1q] = [-1, 0.5, 1, 2]
        # h = relu([-1 + 2, 1 + 0.5]) = [1, 1.5]; e = 1 + 0.75
        score = multichoice_head(*v, W1, W2)
        assert score.e == pytest.approx(1.75)
        assert score.probability == pytest.approx(1 / (1 + np.exp(-1.75)))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_probability_in_open_interval(self, seed):
        r = np.random.default_rng(seed)
        with T.precision(np.float64):
            head = MultiChoiceHead(r, 3)
            vs = [T.Tensor(r.normal(scale=3, size=3)) for _ in range(4)]
            score = multichoice_head(*vs, head.W1, head.W2)
        assert 0 < score.probability < 1

    def test_weight_shape(self, rng):
        with pytest.raises(DimensionError):
            multichoice_head(*_mc_inputs(rng, 2), T.Tensor(np.zeros((6, 3))), T.Tensor(np.zeros((3, 1))))

    def test_dropout_only_in_training(self, rng):
        with T.precision(np.float64):
            head = MultiChoiceHead(rng, 3)
        vs = _mc_inputs(rng, 3, (5,))
        head.eval()
        a = head(*vs, rng=np.random.default_rng(0)).data
        b = head(*vs, rng=np.random.default_rng(1)).data
        np.testing.assert_array_equal(a, b)
        head.train()
        c = head(*vs, rng=np.random.default_rng(0)).data
        assert not np.array_equal(a, c)

    def test_gradient(self, rng):
        with T.precision(np.float64):
            head = MultiChoiceHead(rng, 3, dropout=0.0)
        vs = _mc_inputs(rng, 3, (3,))
        assert_tensors_grad_ok(lambda: binary_logistic_loss(head(*vs), np.array([1, 0, 0])),
                               [*vs, *head.parameters()])


class TestLosses:
    def test_cross_entropy(self, f64):
        loss = cross_entropy(T.Tensor(np.log([0.7, 0.3])), 0)
        assert float(loss.data) == pytest.approx(0.356675, abs=1e-5)

    def test_bce(self):
        assert float(binary_logistic_loss(T.Tensor([0.0]), [1]).data) == pytest.approx(0.693147, abs=1e-5)
        assert float(binary_logistic_loss(T.Tensor([1.0]), [0]).data) == pytest.approx(1.313262, abs=1e-5)

    def test_bce_extreme_logits_finite(self, f64):
        loss = binary_logistic_loss(T.Tensor([800.0, -800.0]), [0, 1])
        assert float(loss.data) == pytest.approx(800.0)

    def test_uniform_span_loss(self, f64):
        for n in (1, 4, 9):
            loss = span_loss(T.Tensor(np.zeros(n)), T.Tensor(np.zeros(n)), None, 0, n - 1)
            assert float(loss.data) == pytest.approx(2 * np.log(n), abs=1e-12)

    def test_gold_out_of_range(self):
        with pytest.raises(IndexError):
            cross_entropy(T.Tensor(np.zeros(3)), 3)
        with pytest.raises(IndexError):
            span_loss(T.Tensor(np.zeros(3)), T.Tensor(np.zeros(3)), None, -1, 0)

    def test_cross_entropy_gradient(self, rng):
        logits = T.Tensor(rng.normal(size=(3, 5)), dtype=np.float64)
        assert_tensors_grad_ok(lambda: cross_entropy(logits, np.array([0, 4, 2])), [logits])
