"""Run configuration and the end-to-end steps behind the command line.

A run is described by a JSON object (see :class:`RunConfig`). Dataset paths
may be written ``bundled:<file>`` to address the fixtures shipped with the
package; relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .errors import ConfigError
from .fixtures import bundled_path
from .model import MODES, ModelConfig, build_model
from .retrieval import index_facts, load_facts, retrieve_top_k
from .text import (build_answer_classes, build_vocab, load_embeddings, load_examples,
                   random_char_table)
from .training import Schedule, TrainConfig, train, write_trace

log = logging.getLogger(__name__)

_PATH_KEYS = ("train", "val", "facts", "embeddings")


@dataclass
class RunConfig:
    mode: str = "open_ended"
    profile: str = "desk"
    seed: int = 0
    train: str | None = None
    val: str | None = None
    facts: str | None = None
    embeddings: str | None = None
    require_embeddings: bool = False
    embedding_init_range: float = 0.05
    output_dir: str = "run"
    epochs: int = 30
    batch_size: int = 32
    base_lr: float = 0.001
    decay: float = 0.8
    decay_every: int = 3
    lr_floor: float = 0.0001
    clip_norm: float = 5.0
    context_limit: int = 500
    num_classes: int = 5000
    retrieve_k: int = 3
    target_train_top1: float | None = None
    eval_train: bool = True
    model: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def schedule(self):
        return Schedule(self.base_lr, self.decay, self.decay_every, self.lr_floor)

    def model_config(self, num_classes=0):
        overrides = dict(self.model)
        overrides.setdefault("context_limit", self.context_limit)
        try:
            return ModelConfig.profile(self.profile, mode=self.mode, num_classes=num_classes, **overrides)
        except TypeError as exc:
            raise ConfigError(f"bad model override: {exc}") from None


def resolve_path(value, base=None):
    if value is None:
        return None
    if value.startswith("bundled:"):
        return bundled_path(value[len("bundled:"):])
    p = Path(value)
    return p if p.is_absolute() or base is None else Path(base) / p


def make_run_config(data=None, base=None, **overrides):
    """Validated :class:`RunConfig` from a mapping plus non-None overrides."""
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = RunConfig(**data)
    for key in _PATH_KEYS:
        value = getattr(cfg, key)
        if value is not None:
            setattr(cfg, key, str(resolve_path(value, base)))
    validate(cfg)
    return cfg


def load_run_config(path=None, **overrides):
    if path is None:
        return make_run_config(None, None, **overrides)
    path = resolve_path(str(path))
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return make_run_config(data, path.parent, **overrides)


def validate(cfg):
    if cfg.mode not in MODES:
        raise ConfigError(f"unknown mode {cfg.mode!r}; expected one of {', '.join(MODES)}")
    if cfg.profile not in ("desk", "full"):
        raise ConfigError(f"unknown profile {cfg.profile!r}; expected desk or full")
    for name in ("epochs", "batch_size", "decay_every", "context_limit", "num_classes", "retrieve_k"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be positive")
    if not (cfg.base_lr > 0 and cfg.lr_floor >= 0 and 0 < cfg.decay <= 1):
        raise ConfigError("learning-rate settings must be positive with decay in (0, 1]")
    if cfg.embedding_init_range <= 0:
        raise ConfigError("embedding_init_range must be positive")
    for key in ("train", "val", "facts"):
        value = getattr(cfg, key)
        if value is not None and not Path(value).exists():
            raise ConfigError(f"{key} path {value} does not exist")
    if cfg.embeddings is not None and not Path(cfg.embeddings).exists() and cfg.require_embeddings:
        raise ConfigError(f"embeddings path {cfg.embeddings} does not exist")
    cfg.model_config(1)
    return cfg


def attach_facts(examples, facts_path, k=3):
    """Fill ``facts`` of examples that have none with the top-k retrieved sentences."""
    index = index_facts(load_facts(facts_path))
    for ex in examples:
        if not ex.facts:
            ex.facts = [f.sentence for f in retrieve_top_k(index, ex.question, ex.visual_concepts, k)]
    return examples


def load_dataset(path, cfg=None):
    examples = load_examples(path)
    if cfg is not None and cfg.facts:
        attach_facts(examples, cfg.facts, cfg.retrieve_k)
    return examples


def embedding_tables(cfg, vocab, model_cfg):
    path = cfg.embeddings
    if path is not None and not Path(path).exists():
        log.warning("embeddings file %s not found; using random vectors", path)
        path = None
    elif path is None:
        log.info("no embeddings file configured; using random vectors")
    words = load_embeddings(path, vocab, model_cfg.word_dim, cfg.seed, model_cfg.freeze_word_embeddings,
                            cfg.embedding_init_range)
    chars = random_char_table(vocab.num_chars, model_cfg.char_dim, cfg.seed, cfg.embedding_init_range)
    return words, chars


@dataclass
class Prepared:
    model: object
    vocab: object
    classes: object
    train_examples: list
    val_examples: list


def prepare(cfg, finetune_from=None):
    """Load data and build (or restore for finetuning) the model of a run."""
    if cfg.train is None:
        raise ConfigError("config needs a train dataset path")
    train_examples = load_dataset(cfg.train, cfg)
    val_examples = load_dataset(cfg.val, cfg) if cfg.val else []
    if finetune_from is not None:
        _, vocab, _, manifest = load_checkpoint(finetune_from)
        classes = build_answer_classes(train_examples, cfg.num_classes) if cfg.mode == "open_ended" else None
        model_cfg = ModelConfig(**{**manifest["config"], "mode": cfg.mode,
                                   "num_classes": len(classes) if classes else 0})
        words, chars = embedding_tables(cfg, vocab, model_cfg)
        model = build_model(model_cfg, vocab, words, chars, cfg.seed)
        load_into(model, finetune_from, strict=False)
        log.info("finetuning from %s", finetune_from)
        return Prepared(model, vocab, classes, train_examples, val_examples)
    vocab = build_vocab(train_examples + val_examples)
    classes = None
    if cfg.mode == "open_ended":
        classes = build_answer_classes(train_examples, cfg.num_classes)
        if classes.excluded:
            log.info("%d training examples have answers outside the %d classes",
                     len(classes.excluded), len(classes))
    model_cfg = cfg.model_config(len(classes) if classes else 0)
    words, chars = embedding_tables(cfg, vocab, model_cfg)
    model = build_model(model_cfg, vocab, words, chars, cfg.seed)
    return Prepared(model, vocab, classes, train_examples, val_examples)


def run_training(cfg, finetune_from=None, out_dir=None, on_epoch=None):
    """Train per ``cfg``; writes config echo, trace and checkpoint to ``out_dir``."""
    prep = prepare(cfg, finetune_from)
    schedule = Schedule.finetune() if finetune_from is not None else cfg.schedule()
    epochs = cfg.epochs
    if finetune_from is not None:
        epochs = sum(schedule.finetune_epochs)
    tc = TrainConfig(epochs=epochs, batch_size=cfg.batch_size, seed=cfg.seed, schedule=schedule,
                     clip_norm=cfg.clip_norm, target_train_top1=cfg.target_train_top1,
                     eval_train=cfg.eval_train)
    result = train(prep.model, prep.train_examples, tc, prep.vocab, prep.classes, prep.val_examples,
                   on_epoch=on_epoch)
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = {"seed": cfg.seed, "config": cfg.to_dict(), "finetune_from": finetune_from and str(finetune_from)}
    (out / "config.json").write_text(json.dumps(echo, indent=1, sort_keys=True))
    write_trace(result.trace, out / "trace.csv")
    save_checkpoint(out / "checkpoint", prep.model, prep.vocab, prep.classes, seed=cfg.seed,
                    extra={"run_config": {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}})
    return prep, result, out

