"""
Linearizing a small knowledge graph and inspecting its structure matrices
=========================================================================

Two triples share the entity "USA". We look at both token sequences and at
the three matrices the encoder adds to its attention logits.
"""

from mgsa import Example, KnowledgeGraph, build_vocab
from mgsa.features import prepare
from mgsa.structure import structure_to_json

graph = KnowledgeGraph.from_triples([("New York", "capital of", "USA"),
                                     ("USA", "leader", "Joe Biden")])
vocab = build_vocab([Example(graph, ("New York is in the USA led by Joe Biden",))])
f = prepare(graph, vocab)

# entity level: every triple written out as <H> head <R> relation <T> tail
print(" ".join(f.entity_seq.tokens))
# word level: one [N] node per word of every triple, so "USA" occurs twice
print(" ".join(f.word_seq.tokens))

# units are the deduplicated entities followed by one relation unit per triple
js = structure_to_json(f.graph, f.matrices)
print(js["units"])

# entity/relation labels and the adjacency mask, one row per unit
for unit, row, adj in zip(js["units"], js["rel_e"], js["adj"]):
    print(f"{unit:>12}", " ".join(f"{r:>8}" for r in row), adj)

# word-level relative positions are clipped shortest-path distances
print(js["rel_w"][0])
