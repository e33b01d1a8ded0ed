import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from mgsa.kg import KnowledgeGraph

FIXTURES = Path(__file__).parent / "fixtures"

WORDS = ("a", "b", "c", "d", "e")
RELATIONS = ("r", "s", "t u")


@st.composite
def graphs(draw, max_triples=5, max_words=3, entities=6):
    """Random KGs over a small label pool so entities repeat across triples."""
    labels = [" ".join(WORDS[(i + j) % len(WORDS)] + str(i) for j in range(1 + i % max_words))
              for i in range(entities)]
    n = draw(st.integers(1, max_triples))
    triples = []
    for _ in range(n):
        h = draw(st.sampled_from(labels))
        t = draw(st.sampled_from(labels))
        r = draw(st.sampled_from(RELATIONS))
        triples.append((h, r, t))
    return KnowledgeGraph.from_triples(triples)


def random_graph(rng: np.random.Generator, max_triples=5, max_words=3, entities=6) -> KnowledgeGraph:
    vocab = [f"w{i}" for i in range(10)]
    labels = sorted({" ".join(rng.choice(vocab, size=int(rng.integers(1, max_words + 1))))
                     for _ in range(entities)})
    rels = [" ".join(rng.choice(vocab, size=int(rng.integers(1, max_words + 1)))) for _ in range(3)]
    n = int(rng.integers(1, max_triples + 1))
    return KnowledgeGraph.from_triples(
        (labels[rng.integers(len(labels))], rels[rng.integers(len(rels))],
         labels[rng.integers(len(labels))]) for _ in range(n))


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_configure(config):
    sys.path.insert(0, str(Path(__file__).parent))


# one line per acceptance criterion, shown again after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
