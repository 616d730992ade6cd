"""Task heads on top of the model-encoder outputs M0, M1, M2, and their losses.

* span: start/end distributions over context positions,
* open-ended: masked average pooling of each M_i, then a softmax classifier,
* multiple choice: an MLP over pooled question-pass and answer-pass features,
  squashed by a sigmoid.

The loss functions take logits rather than probabilities so that the log is
never applied to a rounded-off softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError, InvalidMaskError
from .nn import Module, glorot


@dataclass
class SpanPrediction:
    start: int
    end: int
    score: float


@dataclass
class ChoiceScore:
    e: float
    probability: float


def _vecmat(x, W):
    """``x @ W`` where x may be a single vector."""
    if x.ndim == 1:
        return T.reshape(T.matmul(T.reshape(x, (1, -1)), W), (W.shape[1],))
    return T.matmul(x, W)


def _scores(x, w):
    return T.reshape(T.matmul(x, T.reshape(w, (-1, 1))), x.shape[:-1])


def span_logits(M0, M1, M2, w_start, w_end):
    return (_scores(T.concat([M0, M1], axis=-1), w_start),
            _scores(T.concat([M0, M2], axis=-1), w_end))


def span_head(M0, M1, M2, mask, w_start, w_end):
    """Start and end distributions over context positions."""
    start, end = span_logits(M0, M1, M2, w_start, w_end)
    return T.softmax_masked(start, mask), T.softmax_masked(end, mask)


def decode_span(p_start, p_end, max_span=30):
    """Best (i, j) with i <= j <= i + max_span by p_start[i] * p_end[j].

    Ties go to the smaller start, then the smaller end.
    """
    ps = np.asarray(p_start, dtype=np.float64)
    pe = np.asarray(p_end, dtype=np.float64)
    n = len(ps)
    offset = np.arange(n)[None, :] - np.arange(n)[:, None]
    scores = np.where((offset >= 0) & (offset <= max_span), np.outer(ps, pe), -1.0)
    i, j = divmod(int(np.argmax(scores)), n)
    return SpanPrediction(i, j, float(scores[i, j]))


def masked_mean(M, mask):
    """Average over the position axis counting only unmasked rows."""
    if mask is None:
        return T.mean(M, axis=-2)
    m = np.asarray(mask, dtype=M.dtype)
    count = m.sum(axis=-1, keepdims=True)
    if np.any(count == 0):
        raise InvalidMaskError("average pooling over an empty mask")
    return T.tsum(M * m[..., None], axis=-2) * (1.0 / count)


def classification_logits(M0, M1, M2, mask, W):
    v = T.concat([masked_mean(M, mask) for M in (M0, M1, M2)], axis=-1)
    if W.shape[0] != v.shape[-1]:
        raise DimensionError(f"classifier weights {W.shape} for pooled width {v.shape[-1]}")
    return _vecmat(v, W)


def classification_head(M0, M1, M2, mask, W):
    """Class distribution ``softmax([v0; v1; v2] W)``; W is (3d, K)."""
    return T.softmax_masked(classification_logits(M0, M1, M2, mask, W))


def multichoice_logit(v0q, v1q, v0a, v1a, W1, W2, training=False, rng=None, p=0.5):
    """``W2 relu(W1 [v0a; v1a; v0q; v1q])`` with dropout on the hidden layer."""
    x = T.concat([v0a, v1a, v0q, v1q], axis=-1)
    if W1.shape[0] != x.shape[-1]:
        raise DimensionError(f"MLP weights {W1.shape} for input width {x.shape[-1]}")
    h = T.relu(_vecmat(x, W1))
    h = T.dropout(h, p, training and rng is not None, rng)
    return T.reshape(_vecmat(h, W2), x.shape[:-1])


def multichoice_head(v0q, v1q, v0a, v1a, W1, W2, training=False, rng=None):
    """Score one question/answer pair; returns the pre-sigmoid value and its probability."""
    e = multichoice_logit(v0q, v1q, v0a, v1a, W1, W2, training, rng)
    value = float(np.asarray(e.data).reshape(-1)[0])
    prob = float(T._sigmoid(np.asarray([value], dtype=np.float64))[0])
    return ChoiceScore(value, prob)


# -- losses ----------------------------------------------------------------


def _pick(logp, gold):
    gold = np.asarray(gold)
    k = logp.shape[-1]
    if np.any(gold < 0) or np.any(gold >= k):
        raise IndexError(f"gold index out of range for {k} positions")
    if logp.ndim == 1:
        return logp[int(gold)]
    return logp[np.arange(logp.shape[0]), gold]


def cross_entropy(logits, gold):
    """``-log softmax(logits)[gold]``, averaged over a leading batch axis."""
    return T.mean(-_pick(T.log_softmax(logits), gold))


def binary_logistic_loss(e, label):
    """``-[y log s(e) + (1 - y) log(1 - s(e))] = softplus(e) - y e``, averaged."""
    e = e if isinstance(e, T.Tensor) else T.Tensor(e)
    y = np.asarray(label, dtype=e.dtype)
    return T.mean(T.softplus(e) - e * y)


def span_loss(start_logits, end_logits, mask, gold_start, gold_end):
    """``-log p_start[gold_start] - log p_end[gold_end]``, averaged."""
    ls = _pick(T.log_softmax(start_logits, mask), gold_start)
    le = _pick(T.log_softmax(end_logits, mask), gold_end)
    return T.mean(-(ls + le))


class SpanHead(Module):
    def __init__(self, rng, d):
        self.w_start = glorot(rng, (2 * d,), fan_in=2 * d, fan_out=1)
        self.w_end = glorot(rng, (2 * d,), fan_in=2 * d, fan_out=1)

    def forward(self, M0, M1, M2):
        return span_logits(M0, M1, M2, self.w_start, self.w_end)


class ClassificationHead(Module):
    def __init__(self, rng, d, num_classes):
        self.W = glorot(rng, (3 * d, num_classes))

    def forward(self, M0, M1, M2, mask):
        return classification_logits(M0, M1, M2, mask, self.W)


class MultiChoiceHead(Module):
    def __init__(self, rng, d, hidden=None, dropout=0.5):
        hidden = hidden or d
        self.W1 = glorot(rng, (4 * d, hidden))
        self.W2 = glorot(rng, (hidden, 1))
        self.p = dropout

    def forward(self, v0q, v1q, v0a, v1a, rng=None):
        return multichoice_logit(v0q, v1q, v0a, v1a, self.W1, self.W2, self.training, rng, self.p)
