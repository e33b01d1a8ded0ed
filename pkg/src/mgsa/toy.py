"""Small synthetic corpora for overfitting and structure-sensitivity runs."""

from __future__ import annotations

import numpy as np

from .kg import Example, KnowledgeGraph

NAMES = ("anna", "boris", "clara", "dmitri", "elena", "felix", "greta", "hugo",
         "irene", "jonas", "karla", "lukas", "maria", "nils", "olga", "pavel",
         "rosa", "stefan", "tanja", "ulrich", "vera", "walter", "xenia", "yusuf")

# relation label -> sentence template; some put the tail first
TEMPLATES = {
    "mentor of": "{h} mentors {t} .",
    "student of": "{t} teaches {h} .",
    "employer of": "{h} employs {t} .",
    "employee of": "{t} employs {h} .",
    "parent of": "{h} raised {t} .",
    "child of": "{t} raised {h} .",
}


def overfit_corpus(n: int = 16, seed: int = 0) -> list[Example]:
    """``n`` short examples of one to three triples over a small vocabulary."""
    rng = np.random.default_rng(seed)
    names = NAMES[:12]
    rels = list(TEMPLATES)
    out = []
    for _ in range(n):
        k = int(rng.integers(1, 4))
        people = [names[i] for i in rng.permutation(len(names))[:k + 1]]
        triples, text = [], []
        for j in range(k):
            rel = rels[int(rng.integers(len(rels)))]
            triples.append((people[j], rel, people[j + 1]))
            text.append(TEMPLATES[rel].format(h=people[j], t=people[j + 1]))
        out.append(Example(KnowledgeGraph.from_triples(triples), (" ".join(text),)))
    return out


def chain_example(rng: np.random.Generator, length: int, names=NAMES) -> Example:
    """A path e0 -> e1 -> ... of ``length`` triples, listed in shuffled order.

    The reference narrates the path from its start, one templated sentence
    per triple, so the output order and every subject/object choice depend on
    edge direction rather than on input position.
    """
    people = [names[i] for i in rng.permutation(len(names))[:length + 1]]
    rels = list(TEMPLATES)
    chain = [(people[j], rels[int(rng.integers(len(rels)))], people[j + 1])
             for j in range(length)]
    text = " ".join(TEMPLATES[r].format(h=h, t=t) for h, r, t in chain)
    shuffled = [chain[i] for i in rng.permutation(length)]
    return Example(KnowledgeGraph.from_triples(shuffled), (text,))


def direction_task(n_train: int = 200, n_test: int = 50, seed: int = 0, min_len: int = 2,
                   max_len: int = 2, n_names: int = 12) -> tuple[list[Example], list[Example]]:
    """Train and held-out splits of the chain narration task with no shared graph."""
    rng = np.random.default_rng(seed)
    names = NAMES[:n_names]
    seen: set = set()
    data: list[Example] = []
    while len(data) < n_train + n_test:
        ex = chain_example(rng, int(rng.integers(min_len, max_len + 1)), names)
        key = frozenset(ex.graph.triples)
        if key in seen:
            continue
        seen.add(key)
        data.append(ex)
    return data[:n_train], data[n_train:]


def exact_match(candidates, examples) -> float:
    """Percentage of candidates equal to one of their references."""
    hits = sum(c in ex.references for c, ex in zip(candidates, examples))
    return 100.0 * hits / len(examples)
