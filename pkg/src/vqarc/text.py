"""Tokenization, vocabularies, embeddings and context assembly.

Everything the model sees is text: region descriptions and retrieved fact
sentences are merged into one context paragraph, which is tokenized and
mapped to word and character ids here.
"""

from __future__ import annotations

import json
import logging
import re
import string
from collections import Counter
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyContextError, ParseError

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
QTYPES = ("what", "where", "when", "who", "why", "how", "other")
ARTICLES = frozenset({"a", "an", "the"})

_TOKEN_RE = re.compile(r'[.,?!;:"()]|[^\s.,?!;:"()]+')
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


@dataclass
class QAExample:
    id: str
    question: str
    answers: list
    description_sentences: list = field(default_factory=list)
    facts: list = field(default_factory=list)
    qtype: str = "other"
    choices: list | None = None
    correct_index: int | None = None
    visual_concepts: list = field(default_factory=list)

    def __post_init__(self):
        if not self.description_sentences and not self.facts:
            raise DataError(f"example {self.id!r}: no description sentences and no facts")
        if (self.choices is None) != (self.correct_index is None):
            raise DataError(f"example {self.id!r}: choices and correct_index go together")
        if self.choices is not None:
            if len(self.choices) != 4:
                raise DataError(f"example {self.id!r}: expected 4 choices, got {len(self.choices)}")
            if not 0 <= self.correct_index < 4:
                raise DataError(f"example {self.id!r}: correct_index out of range")
        if self.qtype not in QTYPES:
            raise DataError(f"example {self.id!r}: unknown qtype {self.qtype!r}")

    @classmethod
    def from_dict(cls, record):
        required = ("id", "question", "answers")
        missing = [k for k in required if k not in record]
        if missing:
            raise DataError(f"missing field(s) {', '.join(missing)}")
        known = {k: record[k] for k in cls.__dataclass_fields__ if k in record}
        known["id"] = str(known["id"])
        known.setdefault("qtype", guess_qtype(str(known["question"])))
        if not isinstance(known["question"], str):
            raise DataError("field 'question' must be a string")
        for key in ("answers", "description_sentences", "facts", "visual_concepts"):
            value = known.get(key, [])
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise DataError(f"field {key!r} must be a list of strings")
        return cls(**known)

    def to_dict(self):
        out = asdict(self)
        if out["choices"] is None:
            del out["choices"], out["correct_index"]
        return out


def guess_qtype(question):
    first = tokenize(question)[:1]
    return first[0] if first and first[0] in QTYPES else "other"


def load_examples(path):
    """Read a JSON Lines dataset; errors carry the offending line number."""
    examples, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                ex = QAExample.from_dict(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            except (DataError, TypeError) as exc:
                raise ParseError(str(exc), lineno) from None
            if ex.id in seen:
                raise ParseError(f"duplicate id {ex.id!r}", lineno)
            seen.add(ex.id)
            examples.append(ex)
    return examples


def save_examples(examples, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict()) + "\n")


# -- tokens and answers ----------------------------------------------------


def tokenize(text):
    return [m.group().lower() for m in _TOKEN_RE.finditer(text)]


def tokenize_with_offsets(text):
    return [(m.group().lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def normalize_answer(s):
    """Canonical answer string used for string-match accuracy.

    Lowercase, drop punctuation, drop articles, collapse whitespace, then strip
    one trailing "s" from tokens longer than three characters that do not end
    in "ss". Tokens whose stripped form would be an article are left alone so
    that the function stays idempotent.
    """
    words = s.lower().translate(_PUNCT_TABLE).split()
    words = [w for w in words if w not in ARTICLES]
    return " ".join(_singular(w) for w in words)


def _singular(word):
    if len(word) > 3 and word.endswith("s") and not word.endswith("ss") and word[:-1] not in ARTICLES:
        return word[:-1]
    return word


# -- context assembly ------------------------------------------------------


def _sentences(example):
    raw = list(example.description_sentences) + list(example.facts)
    return [s for s in map(_terminate, raw) if s]


def _join_truncated(sentences, limit):
    if limit < 1:
        raise DataError("context limit must be at least 1")
    if not sentences:
        raise EmptyContextError("context has neither descriptions nor facts")
    text = " ".join(sentences)
    toks = tokenize_with_offsets(text)
    if len(toks) > limit:
        text = text[:toks[limit - 1][2]]
    return text


def assemble_context(example, limit=500):
    """Descriptions then facts, one space apart, cut after ``limit`` tokens."""
    return _join_truncated(_sentences(example), limit)


def assemble_sentences(sentences, limit=500):
    return _join_truncated([s for s in (_terminate(x) for x in sentences) if s], limit)


def _terminate(raw):
    s = raw.strip()
    if s and s[-1] not in ".?!":
        s += " ."
    return s


@dataclass
class TokenizedContext:
    text: str
    words: list
    tokens: np.ndarray
    char_ids: np.ndarray
    mask: np.ndarray
    source_spans: list
    sentences: list

    def span_text(self, start, end):
        """Substring of the context covering tokens ``start..end`` inclusive."""
        return self.text[self.source_spans[start][1]:self.source_spans[end][2]]

    def sentence_of(self, position):
        return self.sentences[self.source_spans[position][0]]


def tokenize_context(example, vocab, limit=500, max_word_len=16):
    sentences = _sentences(example)
    text = _join_truncated(sentences, limit)
    starts, pos = [], 0
    for s in sentences:
        starts.append(pos)
        pos += len(s) + 1
    spans, words = [], []
    for word, a, b in tokenize_with_offsets(text)[:limit]:
        sentence_index = int(np.searchsorted(starts, a, side="right")) - 1
        spans.append((sentence_index, a, b))
        words.append(word)
    ids, chars = vocab.encode(words, max_word_len)
    return TokenizedContext(text, words, ids, chars, np.ones(len(words), dtype=bool), spans, sentences)


def find_span(context_words, answer):
    """First (start, end) where the answer's tokens occur verbatim, else None."""
    target = tokenize(answer)
    n = len(target)
    if not n:
        return None
    for i in range(len(context_words) - n + 1):
        if context_words[i:i + n] == target:
            return i, i + n - 1
    return None


# -- vocabulary ------------------------------------------------------------


class Vocabulary:
    """Word and character symbol tables; ids 0 and 1 are PAD and UNK."""

    def __init__(self, words, chars, counts=None):
        self.words = [PAD_TOKEN, UNK_TOKEN] + [w for w in words if w not in (PAD_TOKEN, UNK_TOKEN)]
        self.chars = [PAD_TOKEN, UNK_TOKEN] + [c for c in chars if c not in (PAD_TOKEN, UNK_TOKEN)]
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.char_index = {c: i for i, c in enumerate(self.chars)}
        self.counts = dict(counts or {})

    def __len__(self):
        return len(self.words)

    @property
    def num_chars(self):
        return len(self.chars)

    def word_id(self, word):
        return self.word_index.get(word, UNK)

    def encode(self, words, max_word_len=16):
        ids = np.array([self.word_id(w) for w in words], dtype=np.int64)
        chars = np.zeros((len(words), max_word_len), dtype=np.int64)
        for i, w in enumerate(words):
            row = [self.char_index.get(c, UNK) for c in w[:max_word_len]]
            chars[i, :len(row)] = row
        return ids, chars

    def to_dict(self):
        return {"words": self.words, "chars": self.chars, "counts": self.counts}

    @classmethod
    def from_dict(cls, d):
        return cls(d["words"], d["chars"], d.get("counts"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def example_texts(example):
    yield from _sentences(example)
    yield example.question
    yield from example.answers
    yield from example.choices or ()


def build_vocab(corpus, min_freq=1, max_words=None):
    """Frequency-ranked vocabulary over strings or :class:`QAExample` records.

    Ties are broken lexicographically; every character seen is kept.
    """
    corpus = list(corpus)
    if not corpus:
        raise DataError("cannot build a vocabulary from an empty corpus")
    words, chars = Counter(), Counter()
    for item in corpus:
        texts = example_texts(item) if isinstance(item, QAExample) else [item]
        for text in texts:
            for tok in tokenize(text):
                words[tok] += 1
                chars.update(tok)
    ranked = sorted((w for w, c in words.items() if c >= min_freq), key=lambda w: (-words[w], w))
    if max_words is not None:
        ranked = ranked[:max_words]
    char_order = sorted(chars, key=lambda c: (-chars[c], c))
    return Vocabulary(ranked, char_order, {w: words[w] for w in ranked})


# -- embeddings ------------------------------------------------------------


@dataclass
class EmbeddingTable:
    rows: np.ndarray
    trainable: np.ndarray
    coverage: int = 0


def load_embeddings(path, vocab, dim, seed=0, freeze=True, init_range=0.05):
    """Word vectors from a GloVe text file, random rows where it has none.

    Uncovered rows and UNK are drawn from uniform(-init_range, init_range);
    PAD is zero.
    With ``freeze`` only UNK is trainable, otherwise every row but PAD.
    ``path=None`` gives an all-random table.
    """
    rng = np.random.default_rng(seed)
    rows = rng.uniform(-init_range, init_range, size=(len(vocab), dim))
    rows[PAD] = 0.0
    covered = np.zeros(len(vocab), dtype=bool)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").rstrip(" ").split(" ")
                if len(parts) == 1 and not parts[0]:
                    continue
                if len(parts) != dim + 1:
                    raise ParseError(f"expected word and {dim} values, got {len(parts)} fields", lineno)
                idx = vocab.word_index.get(parts[0])
                if idx is None or idx in (PAD, UNK):
                    continue
                try:
                    rows[idx] = [float(v) for v in parts[1:]]
                except ValueError:
                    raise ParseError("non-numeric embedding value", lineno) from None
                covered[idx] = True
    if freeze:
        trainable = np.zeros(len(vocab), dtype=bool)
        trainable[UNK] = True
    else:
        trainable = np.ones(len(vocab), dtype=bool)
        trainable[PAD] = False
    return EmbeddingTable(rows, trainable, int(covered.sum()))


def random_char_table(num_chars, dim, seed=0, init_range=0.05):
    rng = np.random.default_rng(seed + 1)
    rows = rng.uniform(-init_range, init_range, size=(num_chars, dim))
    rows[PAD] = 0.0
    trainable = np.ones(num_chars, dtype=bool)
    trainable[PAD] = False
    return EmbeddingTable(rows, trainable)


# -- answer classes --------------------------------------------------------


@dataclass
class AnswerClasses:
    names: list
    excluded: list = field(default_factory=list)

    def __post_init__(self):
        self.index = {n: i for i, n in enumerate(self.names)}

    def __len__(self):
        return len(self.names)

    def label(self, example):
        """Class id of the first gold answer inside the map, or None."""
        for a in example.answers:
            idx = self.index.get(normalize_answer(a))
            if idx is not None:
                return idx
        return None

    def to_dict(self):
        return {"names": self.names, "excluded": self.excluded}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["names"]), list(d.get("excluded", [])))


def build_answer_classes(examples, k=5000):
    """Top-``k`` normalized answers by frequency (ties lexicographic)."""
    counts = Counter(normalize_answer(ex.answers[0]) for ex in examples if ex.answers)
    names = sorted(counts, key=lambda a: (-counts[a], a))[:k]
    classes = AnswerClasses(names)
    classes.excluded = [ex.id for ex in examples if classes.label(ex) is None]
    return classes
