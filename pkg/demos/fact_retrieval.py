# # Keyword retrieval of commonsense facts
#
# Facts are (subject, relation, object, sentence) records. A question and the
# visual concepts detected in the image are matched against an inverted
# index; concept matches count double. The top facts are written out as a
# paragraph that the reader model treats as extra context.

from vqarc.fixtures import FACTS, RETRIEVAL_QUERIES
from vqarc.retrieval import facts_to_paragraph, index_facts, retrieve_scored, retrieve_top_k

index = index_facts(FACTS)
print(len(FACTS), "facts indexed")

# One question, scored with and without a visual concept.

question = "what category is water"
print(retrieve_scored(index, question, [], k=3))
print(retrieve_scored(index, question, ["water"], k=3))

# The best three facts as a paragraph.

print(facts_to_paragraph(retrieve_top_k(index, question, ["water"], k=3)))

# Bundled queries with a known supporting fact: how often is it in the top 3?

found = 0
for q, concepts, gold in RETRIEVAL_QUERIES:
    ids = [fid for fid, _ in retrieve_scored(index, q, concepts, 3)]
    found += gold in ids
    print(f"{q!r:45} concepts={concepts} top3={ids} gold={gold}")
print(f"recall@3 {found}/{len(RETRIEVAL_QUERIES)}")
