"""Synthetic datasets bundled with the package.

The generators are deterministic in their seed. ``write_bundled`` regenerates
the JSON Lines files under ``vqarc/data``; ``bundled_path`` locates them.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .retrieval import Fact
from .text import QAExample, save_examples

OBJECTS = ["car", "dog", "cat", "hat", "ball", "cup", "kite", "bus", "bike", "lamp",
           "chair", "shirt", "bag", "door", "boat", "bird", "horse", "tree", "sign", "train"]
COLORS = ["red", "blue", "green", "yellow", "black", "white", "brown", "pink", "orange", "purple", "gray"]
PLACES = ["kitchen", "park", "street", "beach"]
PEOPLE = ["man", "woman", "boy", "girl"]
TIMES = ["day", "night"]
NUMBERS = ["two", "three", "four"]

_COLOR_TEMPLATES = ("the {o} is {c} .", "there is a {c} {o} .", "a {c} {o} is here .")


def _color_scene(rng, objects=4):
    objs = rng.choice(OBJECTS, size=objects, replace=False)
    cols = rng.choice(COLORS, size=objects, replace=False)
    sentences = [_COLOR_TEMPLATES[rng.integers(len(_COLOR_TEMPLATES))].format(o=o, c=c)
                 for o, c in zip(objs, cols)]
    return [str(o) for o in objs], [str(c) for c in cols], sentences


def make_span_set(n, seed, prefix="span", every_object=False):
    """Copy task: the answer color appears verbatim next to the asked object.

    ``n`` scenes are drawn; each yields one question, or one question per
    object with ``every_object``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        objs, cols, sentences = _color_scene(rng)
        k = int(rng.integers(len(objs)))
        asked = range(len(objs)) if every_object else [k]
        for j in asked:
            suffix = f"-{j}" if every_object else ""
            out.append(QAExample(id=f"{prefix}-{i}{suffix}", question=f"what color is the {objs[j]} ?",
                                 answers=[cols[j]], description_sentences=sentences, qtype="what"))
    return out


def make_mc_set(n, seed, prefix="mc", every_object=False, scene_distractors=2):
    """Four color choices.

    Up to ``scene_distractors`` wrong choices are colors of other objects in
    the scene; the rest are colors absent from it.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        objs, cols, sentences = _color_scene(rng)
        k = int(rng.integers(len(objs)))
        for j in (range(len(objs)) if every_object else [k]):
            in_scene = [c for t, c in enumerate(cols) if t != j]
            outside = [c for c in COLORS if c not in cols]
            n_scene = int(rng.integers(0, scene_distractors + 1))
            wrong = list(rng.choice(in_scene, size=n_scene, replace=False))
            wrong += list(rng.choice(outside, size=3 - n_scene, replace=False))
            choices = [cols[j]] + [str(w) for w in wrong]
            order = rng.permutation(4)
            suffix = f"-{j}" if every_object else ""
            out.append(QAExample(id=f"{prefix}-{i}{suffix}", question=f"what color is the {objs[j]} ?",
                                 answers=[cols[j]], description_sentences=sentences, qtype="what",
                                 choices=[choices[t] for t in order],
                                 correct_index=int(np.where(order == 0)[0][0])))
    return out


def make_open_set(n, seed, prefix="open"):
    """Mixed 6W questions whose answers come from a small closed set."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        objs, cols, sentences = _color_scene(rng, objects=2)
        kind = ("what", "where", "who", "when", "how")[i % 5]
        o = objs[0]
        if kind == "what":
            question, answer = f"what color is the {o} ?", cols[0]
        elif kind == "where":
            answer = str(rng.choice(PLACES))
            sentences.append(f"the {o} is in the {answer} .")
            question = f"where is the {o} ?"
        elif kind == "who":
            answer = str(rng.choice(PEOPLE))
            sentences.append(f"the {answer} holds the {o} .")
            question = f"who holds the {o} ?"
        elif kind == "when":
            answer = str(rng.choice(TIMES))
            sentences.append(f"it is {answer} time .")
            question = "when was the picture taken ?"
        else:
            answer = str(rng.choice(NUMBERS))
            sentences.append(f"there are {answer} {o}s .")
            question = f"how many {o}s are there ?"
        order = rng.permutation(len(sentences))
        out.append(QAExample(id=f"{prefix}-{i}", question=question, answers=[answer],
                             description_sentences=[sentences[j] for j in order], qtype=kind))
    return out


FACTS = [
    Fact("water", "category", "drink", "Water belongs to the category of drink"),
    Fact("umbrella", "used for", "rain", "An umbrella is used for keeping dry in the rain"),
    Fact("cat", "capable of", "hunting mice", "A cat is capable of hunting mice"),
    Fact("banana", "has property", "yellow", "A ripe banana is yellow"),
    Fact("fire hydrant", "used for", "firefighting", "A fire hydrant is used by firefighters"),
    Fact("elephant", "located at", "zoo", "An elephant can be found at the zoo"),
    Fact("pizza", "category", "food", "Pizza belongs to the category of food"),
    Fact("bicycle", "has part", "pedal", "A bicycle has pedals"),
    Fact("snow", "has property", "cold", "Snow is cold"),
    Fact("kite", "used for", "flying", "A kite is used for flying in the wind"),
    Fact("horse", "capable of", "pulling carts", "A horse is capable of pulling carts"),
    Fact("coffee", "category", "drink", "Coffee belongs to the category of drink"),
    Fact("laptop", "used for", "computing", "A laptop is used for working and browsing"),
    Fact("giraffe", "has property", "tall", "A giraffe is very tall"),
    Fact("refrigerator", "used for", "storing food", "A refrigerator keeps food cold"),
    Fact("boat", "located at", "harbor", "A boat is usually found at the harbor"),
    Fact("tennis racket", "used for", "tennis", "A tennis racket is used for hitting the ball"),
    Fact("clock", "used for", "telling time", "A clock is used for telling time"),
    Fact("sheep", "has part", "wool", "A sheep has wool"),
    Fact("broccoli", "category", "vegetable", "Broccoli belongs to the category of vegetable"),
]

# (question, visual concepts, gold fact index)
RETRIEVAL_QUERIES = [
    ("what category does the water in the glass belong to", ["water", "glass"], 0),
    ("why does the man hold an umbrella", ["umbrella", "man"], 1),
    ("what is the cat capable of", ["cat", "sofa"], 2),
    ("what color is a ripe banana", ["banana"], 3),
    ("who uses the fire hydrant", ["fire hydrant", "street"], 4),
    ("where can this animal be found", ["elephant"], 5),
    ("what category does this belong to", ["pizza", "plate"], 6),
    ("which part of the bicycle do you push with your feet", ["bicycle"], 7),
    ("how does the snow feel", ["snow", "mountain"], 8),
    ("what is the kite used for", ["kite", "sky"], 9),
]


def write_bundled(directory=None):
    """Regenerate every bundled fixture file; returns the directory."""
    directory = Path(directory) if directory else Path(__file__).parent / "data"
    directory.mkdir(parents=True, exist_ok=True)
    save_examples(make_span_set(256, seed=11, prefix="span-train", every_object=True), directory / "span_train.jsonl")
    save_examples(make_span_set(64, seed=12, prefix="span-test"), directory / "span_test.jsonl")
    save_examples(make_mc_set(256, seed=21, prefix="mc-train", every_object=True,
                              scene_distractors=0), directory / "mc_train.jsonl")
    save_examples(make_mc_set(64, seed=22, prefix="mc-test", scene_distractors=0), directory / "mc_test.jsonl")
    save_examples(make_open_set(32, seed=31, prefix="open-train"), directory / "open_train.jsonl")
    with open(directory / "facts.jsonl", "w") as fh:
        for f in FACTS:
            fh.write(json.dumps({"subject": f.subject, "relation": f.relation, "object": f.object,
                                 "sentence": f.sentence}) + "\n")
    with open(directory / "retrieval_queries.jsonl", "w") as fh:
        for q, concepts, gold in RETRIEVAL_QUERIES:
            fh.write(json.dumps({"question": q, "visual_concepts": concepts, "gold_fact": gold}) + "\n")
    return directory


def bundled_path(name):
    return Path(str(resources.files("vqarc") / "data" / name))
