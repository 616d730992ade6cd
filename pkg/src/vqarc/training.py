"""Optimization and evaluation: ADAM, the step-decay schedule, negative
sampling for multiple choice, the training loop and answer accuracy."""

from __future__ import annotations

import csv
import logging
import math
from decimal import Decimal
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ContractError, DataError, DimensionError, TrainingError
from .model import encode_example, trainable
from .text import QTYPES, normalize_answer

log = logging.getLogger(__name__)


# -- learning rate ---------------------------------------------------------


@dataclass
class Schedule:
    base_lr: float = 0.001
    decay: float = 0.8
    interval: int = 3
    floor: float = 0.0001
    kind: str = "decay"
    # finetune profile: rates[i] held for epochs[i] epochs
    finetune_rates: tuple = (0.001, 0.0001)
    finetune_epochs: tuple = (10, 10)

    @classmethod
    def finetune(cls):
        return cls(kind="finetune")


def lr_at(schedule, epoch):
    """Learning rate for a 0-based epoch."""
    if epoch < 0:
        raise ContractError("epoch must be non-negative")
    if schedule.kind == "finetune":
        edge = 0
        for rate, span in zip(schedule.finetune_rates, schedule.finetune_epochs):
            edge += span
            if epoch < edge:
                return rate
        return schedule.finetune_rates[-1]
    # decimal arithmetic so that 0.001 * 0.8**2 is 0.00064 rather than 0.0006400000000000002
    k = epoch // schedule.interval
    rate = float(Decimal(repr(schedule.base_lr)) * Decimal(repr(schedule.decay)) ** k)
    return max(schedule.floor, rate)


# -- ADAM ------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params):
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params, grads, state, lr):
    """One bias-corrected ADAM update, in place on ``params`` and ``state``."""
    if not len(params) == len(grads) == len(state.m):
        raise DimensionError("params, grads and optimizer state differ in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.step
    c2 = 1 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise DimensionError(f"gradient {g.shape} for parameter {p.data.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= update.astype(p.data.dtype, copy=False)
    return params, state


def clip_by_global_norm(grads, max_norm):
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-6)
        grads = [g * scale for g in grads]
    return grads, total


# -- multiple-choice sampling ----------------------------------------------


def _negative_indices(example, rng, negatives):
    if example.choices is None or len(example.choices) != 4 or example.correct_index is None:
        raise DataError(f"example {example.id!r} needs 4 choices and a correct index")
    wrong = [i for i in range(4) if i != example.correct_index]
    return [int(i) for i in rng.choice(wrong, size=negatives, replace=False)]


def sample_negatives(example, rng, negatives=2):
    """One positive and ``negatives`` distinct wrong choices as (question, answer, label)."""
    picked = _negative_indices(example, rng, negatives)
    out = [(example.question, example.choices[example.correct_index], 1)]
    return out + [(example.question, example.choices[i], 0) for i in picked]


def _choice_triplets(enc, rng, negatives=2):
    ex = enc.example
    picked = _negative_indices(ex, rng, negatives)
    return [(enc, ex.correct_index, 1)] + [(enc, i, 0) for i in picked]


# -- evaluation ------------------------------------------------------------


@dataclass
class EvalReport:
    top1: float
    top3: float
    per_qtype: dict
    num_examples: int

    def to_dict(self):
        return {"top1": self.top1, "top3": self.top3, "num_examples": self.num_examples,
                "per_qtype": {k: {"top1": v[0], "count": v[1]} for k, v in self.per_qtype.items()}}

    def table(self):
        lines = [f"{'type':<8}{'top1':>8}{'count':>8}"]
        for qtype in QTYPES:
            if qtype in self.per_qtype:
                acc, count = self.per_qtype[qtype]
                lines.append(f"{qtype:<8}{acc:>8.4f}{count:>8d}")
        lines.append(f"{'overall':<8}{self.top1:>8.4f}{self.num_examples:>8d}")
        lines.append(f"{'top3':<8}{self.top3:>8.4f}")
        return "\n".join(lines)


def score_rankings(examples, rankings, mode="open_ended"):
    """Top-1/top-3 string-match accuracy of ranked predictions after normalization."""
    if len(examples) != len(rankings):
        raise DataError("one ranking per example is required")
    if not examples:
        raise DataError("cannot score an empty dataset")
    hits1, hits3, buckets = 0, 0, {}
    for ex, ranked in zip(examples, rankings):
        if mode == "multiple_choice":
            gold = {normalize_answer(ex.choices[ex.correct_index])}
            ranked = ranked[:1]
        else:
            gold = {normalize_answer(a) for a in ex.answers}
        preds = [normalize_answer(r) for r in ranked]
        first = bool(preds) and preds[0] in gold
        hits1 += first
        hits3 += any(p in gold for p in preds[:3])
        right, count = buckets.get(ex.qtype, (0, 0))
        buckets[ex.qtype] = (right + first, count + 1)
    n = len(examples)
    per = {q: (r / c, c) for q, (r, c) in sorted(buckets.items(), key=lambda kv: QTYPES.index(kv[0]))}
    return EvalReport(hits1 / n, hits3 / n, per, n)


def check_mode(examples, mode):
    if mode not in ("open_ended", "multiple_choice", "span"):
        raise DataError(f"unknown mode {mode!r}")
    has_choices = [ex.choices is not None for ex in examples]
    if mode == "multiple_choice" and not all(has_choices):
        raise DataError("multiple-choice evaluation needs choices on every example")


def evaluate(model, examples, mode, vocab=None, classes=None, encoded=None):
    """Accuracy report of ``model`` on ``examples`` in the given mode."""
    if mode != model.config.mode:
        raise DataError(f"model was built for {model.config.mode!r}, dataset mode is {mode!r}")
    check_mode(examples, mode)
    encs = encoded or [encode_example(ex, vocab, model.config, classes) for ex in examples]
    return score_rankings(examples, model.rank(encs, classes), mode)


# -- training loop ---------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    schedule: Schedule = field(default_factory=Schedule)
    clip_norm: float = 5.0
    eval_every: int = 1
    # stop once train top-1 reaches this value
    target_train_top1: float | None = None
    eval_train: bool = True


@dataclass
class TrainResult:
    trace: list
    steps: int
    best_epoch: int
    best_params: dict
    epochs_run: int


def write_trace(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "split", "loss", "top1"])
        for row in rows:
            w.writerow([row[0], row[1], repr(float(row[2])), "" if row[3] is None else repr(float(row[3]))])


def _items_for_epoch(encs, mode, rng):
    if mode == "multiple_choice":
        items = [t for enc in encs for t in _choice_triplets(enc, rng)]
    else:
        items = list(encs)
    order = rng.permutation(len(items))
    return [items[i] for i in order]


def _all_choice_items(encs):
    return [(enc, c, int(c == enc.example.correct_index)) for enc in encs for c in range(4)]


def _mean_loss(model, items, batch_size):
    total, count = 0.0, 0
    with T.no_grad():
        for i in range(0, len(items), batch_size):
            chunk = items[i:i + batch_size]
            loss, _ = model.batch_loss(chunk)
            total += loss.item() * len(chunk)
            count += len(chunk)
    return total / max(count, 1)


def train(model, examples, config, vocab, classes=None, val_examples=None, out_dir=None,
          on_epoch=None, state=None):
    """Fit ``model`` with ADAM; returns the loss/accuracy trace.

    The parameters that scored best on the validation set (the last ones when
    there is no validation set) are restored into the model at the end, and
    written as a checkpoint when ``out_dir`` is given.
    """
    if not examples:
        raise DataError("cannot train on an empty dataset")
    mode = model.config.mode
    encs = [encode_example(ex, vocab, model.config, classes) for ex in examples]
    fit = [e for e in encs if trainable(e, mode)]
    if not fit:
        raise DataError("no example has a usable training target")
    if len(fit) < len(encs):
        log.info("%d of %d examples excluded from the loss", len(encs) - len(fit), len(encs))
    val_encs = [encode_example(ex, vocab, model.config, classes) for ex in val_examples or []]
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    state = state or OptimizerState.like(params)
    trace, steps = [], 0
    best = (-1.0, -1, None)
    epoch = -1
    for epoch in range(config.epochs):
        model.train()
        lr = lr_at(config.schedule, epoch)
        items = _items_for_epoch(fit, mode, rng)
        losses = []
        for b, start in enumerate(range(0, len(items), config.batch_size)):
            batch = items[start:start + config.batch_size]
            model.zero_grad()
            loss, _ = model.batch_loss(batch, rng)
            value = loss.item()
            if not np.isfinite(value):
                ids = [(it[0] if isinstance(it, tuple) else it).example.id for it in batch]
                raise TrainingError(f"non-finite loss at epoch {epoch} batch {b} (examples {ids[:5]}...)")
            T.backward(loss)
            grads, _ = clip_by_global_norm([p.grad for p in params], config.clip_norm)
            adam_step(params, grads, state, lr)
            steps += 1
            losses.append(value * len(batch))
        train_loss = sum(losses) / len(items)
        train_top1 = None
        evaluate_now = (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1
        if config.eval_train and evaluate_now:
            train_top1 = score_rankings([e.example for e in fit], model.rank(fit, classes), mode).top1
        trace.append((epoch, "train", train_loss, train_top1))
        if val_encs and evaluate_now:
            val_items = _all_choice_items(val_encs) if mode == "multiple_choice" else \
                [e for e in val_encs if trainable(e, mode)]
            val_loss = _mean_loss(model, val_items, config.batch_size) if val_items else float("nan")
            val_top1 = score_rankings([e.example for e in val_encs], model.rank(val_encs, classes), mode).top1
            trace.append((epoch, "val", val_loss, val_top1))
            if val_top1 > best[0]:
                best = (val_top1, epoch, _snapshot(model))
        log.debug("epoch %d lr %.6f loss %.5f top1 %s", epoch, lr, train_loss, train_top1)
        if on_epoch is not None:
            on_epoch(epoch, trace)
        if config.target_train_top1 is not None and train_top1 is not None \
                and train_top1 >= config.target_train_top1:
            break
    if best[2] is None:
        best = (None, epoch, _snapshot(model))
    _restore(model, best[2])
    result = TrainResult(trace, steps, best[1], best[2], epoch + 1)
    if out_dir is not None:
        from .checkpoint import save_checkpoint

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace(trace, out / "trace.csv")
        save_checkpoint(out / "checkpoint", model, vocab, classes, seed=config.seed)
    return result


def _snapshot(model):
    return {name: p.data.copy() for name, p in model.named_parameters()}


def _restore(model, snapshot):
    for name, p in model.named_parameters():
        p.data[...] = snapshot[name]
