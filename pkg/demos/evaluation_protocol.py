# # Scoring ranked answers
#
# Predictions and gold answers are compared after normalization: lowercase,
# strip punctuation and articles, and drop a plural "s". A question counts for
# top-1 if the first prediction matches and for top-3 if any of the first
# three match. Results are broken down by question type.

from vqarc.text import QAExample, normalize_answer
from vqarc.training import Schedule, lr_at, score_rankings

for s in ["The Kitchen!", "Parks", "apples", "  two  dogs ", "thes"]:
    print(f"{s!r:16} -> {normalize_answer(s)!r}")

cases = [
    ("what", "red", ["red", "blue", "green"]),
    ("what", "two", ["three", "2", "two"]),
    ("where", "kitchen", ["the Kitchen", "park"]),
    ("who", "man", ["woman", "man", "child"]),
    ("why", "raining", ["sunny", "cold", "windy", "raining"]),
    ("how", "Apples", ["apple"]),
]
examples = [QAExample(id=str(i), question=f"{t} ?", answers=[a], description_sentences=["x ."], qtype=t)
            for i, (t, a, _) in enumerate(cases)]
report = score_rankings(examples, [r for _, _, r in cases])
print(report.table())

# The learning-rate schedule used in training: 0.8x every three epochs down
# to a floor, and the short fine-tuning profile.

print([lr_at(Schedule(), e) for e in range(0, 36, 3)])
print([lr_at(Schedule.finetune(), e) for e in (0, 9, 10, 19)])
