"""The reading-comprehension VQA model and its batching.

Context and question go through the shared input embedding and embedding
encoder, meet in the context-question attention, and the fused sequence is
passed through the model encoder three times (M0, M1, M2). The head depends
on the task mode:

``span``
    start/end positions of the answer inside the context;
``open_ended``
    a distribution over the most frequent training answers;
``multiple_choice``
    a probability for each (question, candidate answer) pair. The candidate is
    run through the same pipeline in the question's place, and the pooled
    M0/M1 features of both passes feed an MLP.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .attention import CQAttention
from .embedding import InputEmbedding
from .encoder import Encoder, EncoderConfig
from .errors import ConfigError, DataError
from .heads import ClassificationHead, MultiChoiceHead, SpanHead, cross_entropy, binary_logistic_loss
from .heads import decode_span, masked_mean, span_loss
from .nn import Module
from .text import PAD, UNK, find_span, tokenize, tokenize_context

MODES = ("open_ended", "multiple_choice", "span")


@dataclass
class ModelConfig:
    mode: str = "open_ended"
    word_dim: int = 16
    char_dim: int = 8
    d: int = 32
    max_word_len: int = 16
    heads: int = 4
    kernel: int = 7
    emb_blocks: int = 1
    emb_conv_layers: int = 4
    model_blocks: int = 2
    model_conv_layers: int = 2
    ff_hidden: int = 32
    dropout: float = 0.0
    mc_dropout: float = 0.5
    mc_hidden: int | None = None
    context_limit: int = 500
    question_limit: int = 50
    max_span: int = 30
    freeze_word_embeddings: bool = True
    # reuse the embedding encoder's weights for the model encoder
    share_encoders: bool = False
    vocab_size: int = 0
    char_vocab_size: int = 0
    num_classes: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")

    @classmethod
    def profile(cls, name="desk", **overrides):
        if name == "desk":
            base = {}
        elif name == "full":
            base = dict(word_dim=300, char_dim=64, d=128, model_blocks=7, ff_hidden=128, dropout=0.1)
        else:
            raise ConfigError(f"unknown profile {name!r}; expected desk or full")
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        return asdict(self)

    def encoder_configs(self):
        emb = EncoderConfig(self.d, self.heads, self.emb_conv_layers, self.kernel, self.emb_blocks,
                            self.ff_hidden, self.dropout)
        mod = EncoderConfig(self.d, self.heads, self.model_conv_layers, self.kernel, self.model_blocks,
                            self.ff_hidden, self.dropout)
        return emb, mod


@dataclass
class TokenBatch:
    words: np.ndarray
    chars: np.ndarray
    mask: np.ndarray


def pad_batch(sequences, max_word_len):
    """Stack ``(word_ids, char_ids)`` pairs, padding to the longest sequence."""
    n = max(len(w) for w, _ in sequences)
    words = np.full((len(sequences), n), PAD, dtype=np.int64)
    chars = np.full((len(sequences), n, max_word_len), PAD, dtype=np.int64)
    mask = np.zeros((len(sequences), n), dtype=bool)
    for i, (w, c) in enumerate(sequences):
        words[i, :len(w)] = w
        chars[i, :len(w)] = c
        mask[i, :len(w)] = True
    return TokenBatch(words, chars, mask)


@dataclass
class Encoded:
    """One example turned into ids, with its training target if it has one."""

    example: object
    context: object
    question: tuple
    label: int | None = None
    span: tuple | None = None
    choices: list = field(default_factory=list)


def encode_query(text, vocab, limit, max_word_len):
    words = tokenize(text)[:limit]
    if not words:
        raise DataError(f"query {text!r} has no tokens")
    return vocab.encode(words, max_word_len)


def encode_example(example, vocab, config, classes=None):
    ctx = tokenize_context(example, vocab, config.context_limit, config.max_word_len)
    q = encode_query(example.question, vocab, config.question_limit, config.max_word_len)
    enc = Encoded(example, ctx, q)
    if config.mode == "open_ended" and classes is not None:
        enc.label = classes.label(example)
    elif config.mode == "span":
        for answer in example.answers:
            enc.span = find_span(ctx.words, answer)
            if enc.span is not None:
                break
    elif config.mode == "multiple_choice":
        if example.choices is None:
            raise DataError(f"example {example.id!r} has no choices")
        enc.choices = [encode_query(c, vocab, config.question_limit, config.max_word_len)
                       for c in example.choices]
    return enc


def trainable(enc, mode):
    if mode == "open_ended":
        return enc.label is not None
    if mode == "span":
        return enc.span is not None
    return bool(enc.choices)


class QAModel(Module):
    def __init__(self, config, word_rows, char_rows, word_trainable=None, char_trainable=None, seed=0):
        rng = np.random.default_rng(seed)
        self.config = config
        emb_cfg, mod_cfg = config.encoder_configs()
        self.embedding = InputEmbedding(rng, word_rows, char_rows, config.d, word_trainable, char_trainable)
        self.emb_encoder = Encoder(rng, emb_cfg)
        self.cq = CQAttention(rng, config.d)
        self.model_encoder = self.emb_encoder if config.share_encoders else Encoder(rng, mod_cfg)
        if config.mode == "span":
            self.head = SpanHead(rng, config.d)
        elif config.mode == "open_ended":
            if config.num_classes < 1:
                raise ConfigError("open-ended mode needs at least one answer class")
            self.head = ClassificationHead(rng, config.d, config.num_classes)
        else:
            self.head = MultiChoiceHead(rng, config.d, config.mc_hidden, config.mc_dropout)

    # -- forward pieces ----------------------------------------------------

    def embed_encode(self, batch, rng=None):
        x = self.embedding(batch.words, batch.chars)
        return self.emb_encoder(x, batch.mask, rng)

    def model_passes(self, C, Q, c_mask, q_mask, passes=3, rng=None):
        x = self.cq(C, Q, c_mask, q_mask)
        outs = []
        for _ in range(passes):
            x = self.model_encoder(x, c_mask, rng)
            outs.append(x)
        return outs

    def _context_batch(self, items):
        return pad_batch([(e.context.tokens, e.context.char_ids) for e in items], self.config.max_word_len)

    def _query_batch(self, queries):
        return pad_batch(queries, self.config.max_word_len)

    def span_forward(self, items, rng=None):
        cb, qb = self._context_batch(items), self._query_batch([e.question for e in items])
        M = self.model_passes(self.embed_encode(cb, rng), self.embed_encode(qb, rng), cb.mask, qb.mask, 3, rng)
        start, end = self.head(*M)
        return start, end, cb.mask

    def class_forward(self, items, rng=None):
        cb, qb = self._context_batch(items), self._query_batch([e.question for e in items])
        M = self.model_passes(self.embed_encode(cb, rng), self.embed_encode(qb, rng), cb.mask, qb.mask, 3, rng)
        return self.head(*M, cb.mask)

    def choice_forward(self, items, answers, rng=None):
        """Logits for (item, answer) pairs; ``answers`` are encoded queries."""
        b = len(items)
        cb = self._context_batch(items)
        qb = self._query_batch([e.question for e in items] + list(answers))
        C = self.embed_encode(cb, rng)
        C2 = T.concat([C, C], axis=0)
        c_mask = np.concatenate([cb.mask, cb.mask])
        M0, M1 = self.model_passes(C2, self.embed_encode(qb, rng), c_mask, qb.mask, 2, rng)
        v0, v1 = masked_mean(M0, c_mask), masked_mean(M1, c_mask)
        return self.head(v0[:b], v1[:b], v0[b:], v1[b:], rng)

    # -- losses and predictions --------------------------------------------

    def batch_loss(self, items, rng=None):
        """Mean loss over ``items``; multiple-choice items are (encoded, choice, label)."""
        mode = self.config.mode
        if mode == "span":
            start, end, mask = self.span_forward(items, rng)
            gs = np.array([e.span[0] for e in items])
            ge = np.array([e.span[1] for e in items])
            return span_loss(start, end, mask, gs, ge), None
        if mode == "open_ended":
            logits = self.class_forward(items, rng)
            gold = np.array([e.label for e in items])
            correct = np.argmax(logits.data, axis=-1) == gold
            return cross_entropy(logits, gold), correct
        encs = [t[0] for t in items]
        e = self.choice_forward(encs, [enc.choices[c] for enc, c, _ in items], rng)
        labels = np.array([t[2] for t in items], dtype=np.float64)
        return binary_logistic_loss(e, labels), None

    def choice_probabilities(self, encs):
        flat = [(enc, c) for enc in encs for c in range(len(enc.choices))]
        with T.no_grad():
            e = self.choice_forward([f[0] for f in flat], [f[0].choices[f[1]] for f in flat])
        probs = T._sigmoid(np.asarray(e.data, dtype=np.float64))
        return probs.reshape(len(encs), -1)

    def class_probabilities(self, encs):
        with T.no_grad():
            logits = self.class_forward(encs)
        return T.softmax_masked(T.Tensor(logits.data, dtype=np.float64)).data

    def span_probabilities(self, encs):
        with T.no_grad():
            start, end, mask = self.span_forward(encs)
        ps = T.softmax_masked(T.Tensor(start.data, dtype=np.float64), mask).data
        pe = T.softmax_masked(T.Tensor(end.data, dtype=np.float64), mask).data
        return ps, pe

    def rank(self, encs, classes=None, batch_size=32, k=3):
        """Ranked answer strings for each encoded example (best first)."""
        was_training = self.training
        self.eval()
        mode = self.config.mode
        out = []
        try:
            for i in range(0, len(encs), batch_size):
                chunk = encs[i:i + batch_size]
                if mode == "open_ended":
                    probs = self.class_probabilities(chunk)
                    for row in probs:
                        order = np.argsort(-row, kind="stable")[:k]
                        out.append([classes.names[j] for j in order])
                elif mode == "multiple_choice":
                    probs = self.choice_probabilities(chunk)
                    for enc, row in zip(chunk, probs):
                        out.append([enc.example.choices[int(np.argmax(row))]])
                else:
                    ps, pe = self.span_probabilities(chunk)
                    for j, enc in enumerate(chunk):
                        n = len(enc.context.words)
                        pred = decode_span(ps[j, :n], pe[j, :n], self.config.max_span)
                        out.append([enc.context.span_text(pred.start, pred.end)])
        finally:
            self.train(was_training)
        return out


def build_model(config, vocab, word_table, char_table, seed=0):
    config.vocab_size = len(vocab)
    config.char_vocab_size = vocab.num_chars
    word_rows = word_table.rows
    if word_rows.shape != (len(vocab), config.word_dim):
        raise ConfigError(f"word table {word_rows.shape} does not match vocab/word_dim")
    return QAModel(config, word_rows, char_table.rows, word_table.trainable, char_table.trainable, seed)


def word_trainable_mask(vocab_size, freeze):
    mask = np.zeros(vocab_size, dtype=bool) if freeze else np.ones(vocab_size, dtype=bool)
    mask[UNK] = True
    mask[PAD] = False
    return mask
