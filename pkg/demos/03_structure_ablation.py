"""
Does the model use graph structure?
===================================

On the chain narration task the reference starts at the source of a path and
follows edge direction, while the triples arrive shuffled. The full model is
compared with an arm whose structure biases and adjacency are all switched
off. Arguments: epochs and a comma separated seed list.
"""

import sys

from mgsa.ablation import format_table, run_arms, summarize, zeroed
from mgsa.config import build_run_config
from mgsa.toy import direction_task

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 40
seeds = [int(s) for s in sys.argv[2].split(",")] if len(sys.argv) > 2 else [0]

# short runs get a shorter warmup so it fits inside the run
rc = build_run_config("desk", {"epochs": epochs, "max_gen_len": 40, "warmup_steps": min(50, epochs)})
train_set, test_set = direction_task(seed=0)
ex = test_set[0]
print([t.as_list() for t in ex.graph.triples], "->", ex.references[0])

arms = {"full": rc.encoder, "zeroed": zeroed(rc.encoder)}
results = run_arms(arms, train_set, test_set, rc.decoder, rc.train, seeds)
print(format_table(summarize(results)))
