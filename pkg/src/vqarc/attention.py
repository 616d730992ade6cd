"""Context-question attention.

Trilinear similarity between every context and question position, the
context-to-question attention ``A`` and the question-to-context attention
``B``, and the ``[c, a, c*a, c*b]`` fusion feeding the model encoder.

Rows are words throughout: ``C`` is (n, d), ``Q`` is (m, d), ``S`` is (n, m),
so ``A = softmax_rows(S) Q`` and ``B = softmax_rows(S) softmax_cols(S)^T C``
are both (n, d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .nn import Linear, Module, glorot


@dataclass
class AttentionArtifacts:
    """Intermediate values of one attention pass; ``S_col`` columns sum to 1."""

    S: T.Tensor
    S_row: T.Tensor
    S_col: T.Tensor
    A: T.Tensor
    B: T.Tensor
    W0: T.Tensor


def _as_mask(mask, shape):
    return np.ones(shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)


def similarity_matrix(C, Q, W0, c_mask=None, q_mask=None):
    """``S[i, j] = W0 . [q_j, c_i, q_j * c_i]``; masked pairs get the sentinel."""
    d = C.shape[-1]
    if Q.shape[-1] != d:
        raise DimensionError(f"context width {d} and question width {Q.shape[-1]} differ")
    if W0.shape != (3 * d,):
        raise DimensionError(f"trilinear weights {W0.shape} for width {d}")
    w = T.reshape(W0, (3, d, 1))
    from_q = T.swapaxes(T.matmul(Q, w[0]), -1, -2)
    from_c = T.matmul(C, w[1])
    cross = T.matmul(C * T.reshape(w[2], (d,)), T.swapaxes(Q, -1, -2))
    S = from_c + from_q + cross
    if c_mask is None and q_mask is None:
        return S
    cm = _as_mask(c_mask, C.shape[:-1])
    qm = _as_mask(q_mask, Q.shape[:-1])
    return T.where(cm[..., :, None] & qm[..., None, :], S, T.MASK_SENTINEL)


def row_softmax(S, q_mask=None):
    return T.softmax_masked(S, None if q_mask is None else np.asarray(q_mask, bool)[..., None, :])


def column_softmax(S, c_mask=None):
    """Softmax down each column, returned transposed as (m, n)."""
    St = T.swapaxes(S, -1, -2)
    return T.softmax_masked(St, None if c_mask is None else np.asarray(c_mask, bool)[..., None, :])


def c2q_attention(S, Q, q_mask=None):
    if S.shape[-1] != Q.shape[-2]:
        raise DimensionError(f"similarity {S.shape} does not match question {Q.shape}")
    return T.matmul(row_softmax(S, q_mask), Q)


def q2c_attention(S, C, c_mask=None, q_mask=None):
    if S.shape[-2] != C.shape[-2]:
        raise DimensionError(f"similarity {S.shape} does not match context {C.shape}")
    return T.matmul(row_softmax(S, q_mask), T.matmul(column_softmax(S, c_mask), C))


def fuse(C, A, B):
    if not C.shape == A.shape == B.shape:
        raise DimensionError(f"fuse needs equal shapes, got {C.shape}, {A.shape}, {B.shape}")
    return T.concat([C, A, C * A, C * B], axis=-1)


class CQAttention(Module):
    """Trilinear weights plus the 4d -> d projection after fusion."""

    def __init__(self, rng, d):
        self.W0 = glorot(rng, (3 * d,), fan_in=3 * d, fan_out=1)
        self.proj = Linear(rng, 4 * d, d, bias=False)

    def forward(self, C, Q, c_mask=None, q_mask=None, return_artifacts=False):
        S = similarity_matrix(C, Q, self.W0, c_mask, q_mask)
        S_row = row_softmax(S, q_mask)
        S_col = column_softmax(S, c_mask)
        A = T.matmul(S_row, Q)
        B = T.matmul(S_row, T.matmul(S_col, C))
        out = self.proj(fuse(C, A, B))
        if return_artifacts:
            return out, AttentionArtifacts(S, S_row, T.swapaxes(S_col, -1, -2), A, B, self.W0)
        return out
