"""Keyword retrieval of supporting facts from a fact base.

Facts are indexed by their normalized content tokens. A question is scored
against every fact that shares a token with it:

    score = |question tokens & fact tokens| + 2 * |concept tokens & fact tokens|

Visual concepts count double because they name things actually present in
the image. The retrieved sentences become context paragraphs.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass

from .errors import DataError, ParseError
from .text import assemble_sentences, normalize_answer, tokenize

STOPWORDS = frozenset({"a", "an", "the", "is", "of", "to"})
CONCEPT_WEIGHT = 2


@dataclass(frozen=True)
class Fact:
    subject: str
    relation: str
    object: str
    sentence: str

    def __post_init__(self):
        for name in ("subject", "object", "sentence"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise DataError(f"fact field {name!r} must be a non-empty string")


def content_tokens(text):
    """Normalized tokens of ``text`` with stopwords and punctuation removed."""
    out = set()
    for tok in tokenize(text):
        norm = normalize_answer(tok)
        if norm and norm not in STOPWORDS:
            out.update(norm.split())
    return out - STOPWORDS


def fact_tokens(fact):
    return content_tokens(" ".join((fact.subject, fact.relation, fact.object, fact.sentence)))


class FactIndex:
    """Inverted index from content token to the ids of facts containing it."""

    def __init__(self, facts):
        self.facts = list(facts)
        self.tokens = [fact_tokens(f) for f in self.facts]
        self.postings = defaultdict(set)
        for fid, toks in enumerate(self.tokens):
            for tok in toks:
                self.postings[tok].add(fid)

    def __len__(self):
        return len(self.facts)


def index_facts(facts):
    facts = list(facts)
    if not facts:
        raise DataError("cannot index an empty fact list")
    return FactIndex(facts)


def load_facts(path):
    facts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                facts.append(Fact(rec["subject"], rec.get("relation", ""), rec["object"], rec["sentence"]))
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            except KeyError as exc:
                raise ParseError(f"missing field {exc.args[0]!r}", lineno) from None
            except DataError as exc:
                raise ParseError(str(exc), lineno) from None
    return facts


def score_fact(fact_toks, question_toks, concept_toks):
    return len(question_toks & fact_toks) + CONCEPT_WEIGHT * len(concept_toks & fact_toks)


def retrieve_scored(index, question, visual_concepts=(), k=3):
    """Top ``k`` ``(fact_id, score)`` pairs, best first, ties by fact id."""
    q = content_tokens(question)
    c = set().union(*(content_tokens(v) for v in visual_concepts)) if visual_concepts else set()
    candidates = set()
    for tok in q | c:
        candidates |= index.postings.get(tok, set())
    scored = [(fid, score_fact(index.tokens[fid], q, c)) for fid in candidates]
    scored = [(fid, s) for fid, s in scored if s > 0]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def retrieve_top_k(index, question, visual_concepts=(), k=3):
    return [index.facts[fid] for fid, _ in retrieve_scored(index, question, visual_concepts, k)]


def facts_to_paragraph(facts, limit=500):
    """Fact sentences in rank order, truncated like any other context."""
    return assemble_sentences([f.sentence for f in facts], limit)
