"""Checkpoint container.

A checkpoint is a directory holding

``manifest.json``
    format version, seed, model config, and for every parameter its name,
    shape, byte offset and byte length inside the payload;
``params.bin``
    all parameters back to back as little-endian float32;
``vocab.json`` / ``answers.json``
    the symbol tables needed to rebuild inputs and decode answers.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import ModelConfig, QAModel, word_trainable_mask
from .text import AnswerClasses, Vocabulary

FORMAT_VERSION = 1
_LE_F32 = np.dtype("<f4")


def save_checkpoint(path, model, vocab, classes=None, seed=0, extra=None):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, p in model.named_parameters():
        raw = np.ascontiguousarray(p.data, dtype=_LE_F32).tobytes()
        entries.append({"name": name, "shape": list(p.data.shape), "offset": offset, "length": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "float32-le",
        "seed": seed,
        "config": model.config.to_dict(),
        "params": entries,
    }
    if extra:
        manifest["extra"] = extra
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    (path / "params.bin").write_bytes(b"".join(chunks))
    vocab.save(path / "vocab.json")
    if classes is not None:
        (path / "answers.json").write_text(json.dumps(classes.to_dict()))
    return path


def read_manifest(path):
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise DataError(f"{path} is not a checkpoint directory")
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format {manifest.get('format_version')!r}")
    return manifest


def load_params(path):
    """Name -> float32 array mapping from a checkpoint payload."""
    path = Path(path)
    manifest = read_manifest(path)
    payload = (path / "params.bin").read_bytes()
    out = {}
    for entry in manifest["params"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["length"]]
        if len(raw) != entry["length"]:
            raise DataError(f"payload truncated at parameter {entry['name']!r}")
        out[entry["name"]] = np.frombuffer(raw, dtype=_LE_F32).reshape(entry["shape"]).astype(np.float32)
    return out


def load_into(model, path, strict=True):
    params = load_params(path)
    for name, p in model.named_parameters():
        if name not in params:
            if strict:
                raise DataError(f"checkpoint has no parameter {name!r}")
            continue
        if params[name].shape != p.data.shape:
            if strict:
                raise DataError(f"parameter {name!r}: checkpoint {params[name].shape} vs model {p.data.shape}")
            continue
        p.data[...] = params[name]
    return model


def load_checkpoint(path):
    """Rebuild the model, vocabulary and answer classes stored at ``path``."""
    path = Path(path)
    manifest = read_manifest(path)
    config = ModelConfig(**manifest["config"])
    vocab = Vocabulary.load(path / "vocab.json")
    classes = None
    if (path / "answers.json").exists():
        classes = AnswerClasses.from_dict(json.loads((path / "answers.json").read_text()))
    word_rows = np.zeros((config.vocab_size, config.word_dim))
    char_rows = np.zeros((config.char_vocab_size, config.char_dim))
    char_mask = np.ones(config.char_vocab_size, dtype=bool)
    char_mask[0] = False
    model = QAModel(config, word_rows, char_rows,
                    word_trainable_mask(config.vocab_size, config.freeze_word_embeddings), char_mask,
                    seed=manifest.get("seed", 0))
    load_into(model, path)
    return model, vocab, classes, manifest
