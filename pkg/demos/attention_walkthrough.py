# # Context-query attention on a toy scene
#
# A context of five words and a question of three words are given random
# d-dimensional encodings. We run one trilinear attention pass and look at the
# intermediate matrices: the similarity S, its row and column softmaxes, and
# the two attended summaries A (context-to-query) and B (query-to-context).

import numpy as np

from vqarc import tensor as T
from vqarc.attention import CQAttention

rng = np.random.default_rng(0)
d = 6
context = "the red hat is here".split()
question = "what color hat".split()

C = T.Tensor(rng.normal(size=(len(context), d)))
Q = T.Tensor(rng.normal(size=(len(question), d)))

attn = CQAttention(rng, d)
out, art = attn.forward(C, Q, return_artifacts=True)

# S has one row per context word and one column per question word.

print("S shape", art.S.shape)
print(np.round(art.S.data, 2))

# Each row of the row softmax is a distribution over question words.

print("row sums", np.round(art.S_row.data.sum(axis=1), 6))

# Each column of the column softmax is a distribution over context words.

print("column sums", np.round(art.S_col.data.sum(axis=0), 6))

# A and B both have the context's shape, so they can be fused with C
# position by position; the fused 4d vectors are projected back to d.

print("A", art.A.shape, "B", art.B.shape, "output", out.shape)

# Padding: mask the last context word and the last question word. Masked
# entries get zero attention weight.

c_mask = np.array([True, True, True, True, False])
q_mask = np.array([True, True, False])
_, masked = attn.forward(C, Q, c_mask, q_mask, return_artifacts=True)
print("weight on padded question word", masked.S_row.data[:4, 2])
print("weight on padded context word", masked.S_col.data[4, :2])

# Gradients flow back to both encodings and to the trilinear weights.

C.requires_grad = Q.requires_grad = True
T.backward(T.tsum(attn.forward(C, Q)))
print("grad norms", np.linalg.norm(C.grad), np.linalg.norm(Q.grad), np.linalg.norm(attn.W0.grad))
