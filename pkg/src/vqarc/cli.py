"""Command-line entry point: ``vqarc ingest|train|eval|predict|retrieve``.

Failures exit with status 2 and a single ``error[<category>]: <message>``
line on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .errors import UsageError, VQARCError
from .heads import decode_span
from .model import encode_example
from .pipeline import attach_facts, load_run_config, resolve_path, run_training
from .retrieval import index_facts, load_facts, retrieve_scored
from .text import QAExample, build_answer_classes, build_vocab, load_examples, save_examples
from .training import evaluate

log = logging.getLogger("vqarc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def _split_sentences(text):
    return [s for s in re.split(r"(?<=[.?!])\s+", text.strip()) if s]


# -- subcommands -----------------------------------------------------------


def cmd_ingest(args):
    examples = load_examples(resolve_path(args.input))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.facts:
        attach_facts(examples, resolve_path(args.facts), args.k or 3)
    save_examples(examples, out / "examples.jsonl")
    vocab = build_vocab(examples)
    vocab.save(out / "vocab.json")
    report = {"command": "ingest", "seed": args.seed, "mode": args.mode, "examples": len(examples),
              "kept": len(examples), "excluded": 0, "vocab_size": len(vocab)}
    if args.mode == "open_ended":
        classes = build_answer_classes(examples, args.num_classes)
        (out / "answers.json").write_text(json.dumps(classes.to_dict()))
        report.update(classes=len(classes), kept=len(examples) - len(classes.excluded),
                      excluded=len(classes.excluded), excluded_ids=classes.excluded)
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    _emit(report)
    return 0


def cmd_train(args):
    cfg = load_run_config(args.config, seed=args.seed, mode=args.mode, profile=args.profile,
                          output_dir=args.out, epochs=args.epochs)
    finetune = resolve_path(args.finetune_from) if args.finetune_from else None

    def progress(epoch, trace):
        log.info("epoch %d: %s", epoch, [r for r in trace if r[0] == epoch])

    _, result, out = run_training(cfg, finetune, on_epoch=progress)
    _emit({"command": "train", "seed": cfg.seed, "config": cfg.to_dict(), "output_dir": str(out),
           "epochs_run": result.epochs_run, "steps": result.steps, "best_epoch": result.best_epoch,
           "final": [list(r) for r in result.trace[-2:]]})
    return 0


def cmd_eval(args):
    model, vocab, classes, manifest = load_checkpoint(resolve_path(args.checkpoint))
    mode = args.mode or model.config.mode
    cfg = (manifest.get("extra") or {}).get("run_config", {})
    examples = load_examples(resolve_path(args.dataset))
    if cfg.get("facts"):
        attach_facts(examples, cfg["facts"], cfg.get("retrieve_k", 3))
    if args.limit:
        examples = examples[:args.limit]
    report = evaluate(model, examples, mode, vocab, classes)
    _emit({"command": "eval", "seed": manifest.get("seed"), "config": manifest["config"],
           "mode": mode, "report": report.to_dict()})
    print(report.table())
    return 0


def _predict_example(args, mode):
    if not args.question:
        raise UsageError("predict needs --question")
    sentences = []
    for text in args.context or []:
        sentences += _split_sentences(text)
    facts = []
    if args.facts:
        index = index_facts(load_facts(resolve_path(args.facts)))
        facts = [index.facts[i].sentence for i, _ in retrieve_scored(index, args.question, args.concepts or [],
                                                                     args.k or 3)]
    if not sentences and not facts:
        raise UsageError("predict needs --context or --facts")
    if mode == "multiple_choice" and (not args.choices or len(args.choices) != 4):
        raise UsageError("multiple-choice predict needs exactly 4 --choices")
    return QAExample(id="predict", question=args.question, answers=[], description_sentences=sentences,
                     facts=facts, choices=args.choices if mode == "multiple_choice" else None,
                     correct_index=0 if mode == "multiple_choice" else None,
                     visual_concepts=args.concepts or [])


def cmd_predict(args):
    model, vocab, classes, manifest = load_checkpoint(resolve_path(args.checkpoint))
    mode = model.config.mode
    ex = _predict_example(args, mode)
    enc = encode_example(ex, vocab, model.config, classes)
    model.eval()
    out = {"command": "predict", "seed": manifest.get("seed"), "config": manifest["config"], "mode": mode,
           "question": ex.question}
    if mode == "multiple_choice":
        probs = model.choice_probabilities([enc])[0]
        out["choices"] = [{"choice": c, "probability": float(p)} for c, p in zip(ex.choices, probs)]
        out["answer"] = ex.choices[int(np.argmax(probs))]
        _emit(out)
        for c, p in zip(ex.choices, probs):
            print(f"{c} ({p:.3f})")
    elif mode == "open_ended":
        probs = model.class_probabilities([enc])[0]
        order = np.argsort(-probs, kind="stable")[:3]
        out["top3"] = [{"answer": classes.names[j], "probability": float(probs[j])} for j in order]
        out["answer"] = classes.names[order[0]]
        _emit(out)
        for j in order:
            print(f"{classes.names[j]} ({probs[j]:.3f})")
    else:
        ps, pe = model.span_probabilities([enc])
        pred = decode_span(ps[0], pe[0], model.config.max_span)
        out.update(answer=enc.context.span_text(pred.start, pred.end), start=pred.start, end=pred.end,
                   score=pred.score, supporting_sentence=enc.context.sentence_of(pred.start))
        _emit(out)
        print(f"answer: {out['answer']} ({pred.score:.3f})")
        print(f"supporting sentence: {out['supporting_sentence']}")
    return 0


def cmd_retrieve(args):
    if not args.question:
        raise UsageError("retrieve needs --question")
    index = index_facts(load_facts(resolve_path(args.facts)))
    k = args.k or 3
    ranked = retrieve_scored(index, args.question, args.concepts or [], k)
    _emit({"command": "retrieve", "seed": args.seed, "k": k, "question": args.question,
           "concepts": args.concepts or [],
           "facts": [{"id": i, "score": s, "sentence": index.facts[i].sentence} for i, s in ranked]})
    for rank, (i, s) in enumerate(ranked, 1):
        print(f"{rank}\t{s}\t{i}\t{index.facts[i].sentence}")
    return 0


# -- argument parsing ------------------------------------------------------


def build_parser():
    p = _Parser(prog="vqarc", description="Visual question answering as reading comprehension.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    ing = sub.add_parser("ingest", help="validate a JSONL dataset and build its symbol tables")
    ing.add_argument("input")
    ing.add_argument("out")
    ing.add_argument("--mode", default="open_ended", choices=["open_ended", "multiple_choice", "span"])
    ing.add_argument("--num-classes", type=int, default=5000)
    ing.add_argument("--facts", help="fact file used to fill missing supporting facts")
    ing.add_argument("--k", type=int)
    ing.add_argument("--seed", type=int, default=0)
    ing.set_defaults(func=cmd_ingest)

    tr = sub.add_parser("train", help="train a model from a JSON run config")
    tr.add_argument("--config")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--mode", choices=["open_ended", "multiple_choice", "span"])
    tr.add_argument("--profile", choices=["desk", "full"])
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--out", help="output directory (overrides output_dir)")
    tr.add_argument("--finetune-from", help="checkpoint directory to start from")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="accuracy report of a checkpoint on a dataset")
    ev.add_argument("checkpoint")
    ev.add_argument("dataset")
    ev.add_argument("--mode", choices=["open_ended", "multiple_choice", "span"])
    ev.add_argument("--limit", type=int, help="evaluate only the first N examples")
    ev.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="answer one question")
    pr.add_argument("checkpoint")
    pr.add_argument("--question")
    pr.add_argument("--context", action="append", help="description text (repeatable)")
    pr.add_argument("--choices", nargs="+")
    pr.add_argument("--facts", help="fact file to retrieve supporting facts from")
    pr.add_argument("--concepts", nargs="*")
    pr.add_argument("--k", type=int)
    pr.set_defaults(func=cmd_predict)

    rt = sub.add_parser("retrieve", help="rank facts for a question")
    rt.add_argument("facts")
    rt.add_argument("--question")
    rt.add_argument("--concepts", nargs="*")
    rt.add_argument("--k", type=int)
    rt.add_argument("--seed", type=int, default=0)
    rt.set_defaults(func=cmd_retrieve)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if args.command is None:
            raise UsageError("a subcommand is required: ingest, train, eval, predict or retrieve")
        return args.func(args)
    except VQARCError as exc:
        message = str(exc).replace("\n", " ")
        print(f"error[{exc.category}]: {message}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[io]: {exc}".replace("\n", " "), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
