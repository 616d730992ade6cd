# # Training the reader on the bundled desk fixtures
#
# Three small runs use the configs shipped with the package:
#
# - open_desk.json: answer classification over a closed set, trained until
#   every training question is answered correctly.
# - span_desk.json: the answer is a span copied from the scene description.
# - mc_desk.json: rank four candidate answers per question.
#
# Pass --quick to shorten the span and multiple-choice runs to a few epochs.

import sys
import tempfile
import time

from vqarc.cli import main
from vqarc.fixtures import bundled_path
from vqarc.pipeline import load_run_config, run_training
from vqarc.training import evaluate

quick = "--quick" in sys.argv
out = tempfile.mkdtemp(prefix="vqarc-demo-")

# ## Open-ended classification

cfg = load_run_config("bundled:open_desk.json", output_dir=f"{out}/open")
start = time.perf_counter()
prep, result, _ = run_training(cfg)
report = evaluate(prep.model, prep.train_examples, "open_ended", prep.vocab, prep.classes)
print(f"open-ended: {result.epochs_run} epochs, {time.perf_counter() - start:.0f}s")
print(report.table())

# ## Span copying
#
# Scenes list objects with colors; held-out scenes use new object/color
# pairings, so the model has to find the asked object and copy its color.

cfg = load_run_config("bundled:span_desk.json", output_dir=f"{out}/span", epochs=3 if quick else None)
start = time.perf_counter()
prep, result, _ = run_training(cfg)
report = evaluate(prep.model, prep.val_examples, "span", prep.vocab)
print(f"span: {result.epochs_run} epochs, {time.perf_counter() - start:.0f}s, held-out exact match {report.top1:.3f}")

# The saved checkpoint answers new questions from the command line.

main(["predict", f"{out}/span/checkpoint", "--question", "what color is the cup ?",
      "--context", "the cup is blue . a green lamp stands by the door ."])

# ## Multiple choice
#
# Each question comes with four colors; one of them appears in the scene.

cfg = load_run_config("bundled:mc_desk.json", output_dir=f"{out}/mc", epochs=3 if quick else None)
start = time.perf_counter()
prep, result, _ = run_training(cfg)
report = evaluate(prep.model, prep.val_examples, "multiple_choice", prep.vocab)
print(f"multiple choice: {result.epochs_run} epochs, {time.perf_counter() - start:.0f}s, "
      f"held-out accuracy {report.top1:.3f} (chance 0.25)")
print("outputs in", out, "| bundled configs in", bundled_path(""))
