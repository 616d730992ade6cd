import sys

import numpy as np
import pytest

from vqarc import tensor as T
from vqarc.model import ModelConfig, build_model
from vqarc.text import build_vocab, load_embeddings, random_char_table


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def f64():
    with T.precision(np.float64):
        yield


def leaf(a):
    return T.Tensor(np.asarray(a, dtype=np.float64), requires_grad=True, dtype=np.float64)


def assert_grad_ok(f, *arrays, tol=1e-4):
    with T.precision(np.float64):
        report = T.grad_check(f, [leaf(a) for a in arrays], tol=tol)
    assert report.passed, f"max relative error {report.max_rel_error:.3g}"
    return report


def assert_tensors_grad_ok(f, tensors, tol=1e-4):
    """grad_check of a closure ``f()`` over existing float64 tensors, perturbed in place."""
    tensors = list(tensors)
    assert all(t.data.dtype == np.float64 for t in tensors)
    with T.precision(np.float64):
        report = T.grad_check(lambda *_: f(), tensors, tol=tol)
    assert report.passed, f"max relative error {report.max_rel_error:.3g}"
    return report


TINY = dict(word_dim=4, char_dim=4, d=8, heads=2, kernel=3, emb_conv_layers=1, model_blocks=1,
            model_conv_layers=1, ff_hidden=8, mc_hidden=8)


def tiny_model(examples, mode, seed=0, classes=None, **kw):
    vocab = build_vocab(examples)
    cfg = ModelConfig.profile("desk", mode=mode, **{**TINY, **kw})
    if classes is not None:
        cfg.num_classes = len(classes)
    words = load_embeddings(None, vocab, cfg.word_dim, seed=seed)
    chars = random_char_table(vocab.num_chars, cfg.char_dim, seed=seed)
    return build_model(cfg, vocab, words, chars, seed=seed), vocab


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
