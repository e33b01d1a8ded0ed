"""
Overfitting sixteen synthetic examples
======================================

A small model (width 32, two heads, two layers per stack) memorizes a toy
corpus. Pass a smaller epoch count as the first argument for a quick look.
"""

import sys

from mgsa import bleu4, build_vocab
from mgsa.config import build_run_config
from mgsa.generate import generate
from mgsa.model import MGSAModel
from mgsa.toy import overfit_corpus
from mgsa.train import train, training_features

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 500
# short runs get a shorter warmup so it fits inside the run
rc = build_run_config("desk", {"epochs": epochs, "max_gen_len": 40, "warmup_steps": min(50, epochs)})

corpus = overfit_corpus(16)
vocab = build_vocab(corpus)
print(len(vocab), "tokens,", sum(len(ex.graph.triples) for ex in corpus), "triples")

model = MGSAModel(vocab, rc.encoder, rc.decoder, seed=0)
feats = training_features(corpus, vocab, rc.encoder, rc.decoder.max_gen_len)


def show(epoch, loss):
    if epoch % 50 == 0 or epoch == 1:
        print(f"epoch {epoch:4d}  loss {loss:.4f}")
    return False


train(model, feats, rc.train, on_epoch=show)

outputs = [generate(model, ex.graph) for ex in corpus]
for ex, out in list(zip(corpus, outputs))[:3]:
    print("graph:", [t.as_list() for t in ex.graph.triples])
    print("  ref:", ex.references[0])
    print("  out:", out)
print("training BLEU4", round(bleu4(outputs, [ex.references for ex in corpus]), 2))
