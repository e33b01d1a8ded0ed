"""Knowledge-graph data model, JSON-Lines corpus ingestion and head clustering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class CorpusError(ValueError):
    """Malformed corpus line or invalid triple."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str

    def __post_init__(self):
        for name in ("head", "relation", "tail"):
            value = getattr(self, name)
            if not isinstance(value, str):
                raise CorpusError(f"triple {self.as_list()!r}: {name} is not a string")
            value = value.strip()
            if not value.split():
                raise CorpusError(f"triple {self.as_list()!r}: empty {name}")
            object.__setattr__(self, name, value)

    def as_list(self) -> list:
        return [self.head, self.relation, self.tail]


@dataclass(frozen=True)
class KnowledgeGraph:
    """Ordered triples with deduplicated entities and per-occurrence relations.

    Units are indexed entities first (first-appearance order, head before
    tail) followed by one relation unit per triple, in triple order.
    """

    triples: tuple[Triple, ...]
    entity_nodes: tuple[str, ...] = field(init=False)
    relation_nodes: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        triples = tuple(t if isinstance(t, Triple) else Triple(*t) for t in self.triples)
        object.__setattr__(self, "triples", triples)
        seen: dict[str, int] = {}
        for t in triples:
            for label in (t.head, t.tail):
                if label not in seen:
                    seen[label] = len(seen)
        object.__setattr__(self, "entity_nodes", tuple(seen))
        object.__setattr__(self, "relation_nodes", tuple(t.relation for t in triples))
        object.__setattr__(self, "_entity_index", seen)

    @classmethod
    def from_triples(cls, triples: Iterable[Sequence[str] | Triple]) -> "KnowledgeGraph":
        return cls(tuple(t if isinstance(t, Triple) else Triple(*t) for t in triples))

    @property
    def num_entities(self) -> int:
        return len(self.entity_nodes)

    @property
    def m(self) -> int:
        """Unit count: entities plus relation occurrences."""
        return len(self.entity_nodes) + len(self.relation_nodes)

    def entity_unit(self, label: str) -> int:
        return self._entity_index[label]

    def relation_unit(self, triple_index: int) -> int:
        return len(self.entity_nodes) + triple_index

    def triple_units(self, triple_index: int) -> tuple[int, int, int]:
        """(head unit, relation unit, tail unit) of one triple."""
        t = self.triples[triple_index]
        return (self._entity_index[t.head], self.relation_unit(triple_index),
                self._entity_index[t.tail])

    def unit_labels(self) -> list[str]:
        return list(self.entity_nodes) + list(self.relation_nodes)

    def is_entity_unit(self, unit: int) -> bool:
        return unit < len(self.entity_nodes)

    def prefix(self, k: int) -> "KnowledgeGraph":
        """Graph made of the first ``k`` triples."""
        return KnowledgeGraph(self.triples[:k])

    def __len__(self):
        return len(self.triples)


@dataclass(frozen=True)
class Example:
    graph: KnowledgeGraph
    references: tuple[str, ...]

    def __post_init__(self):
        refs = tuple(self.references)
        if not refs:
            raise CorpusError("example has no reference text")
        for r in refs:
            if not isinstance(r, str) or not r.strip():
                raise CorpusError("empty reference text")
        object.__setattr__(self, "references", refs)

    def to_json(self) -> dict:
        return {"triples": [t.as_list() for t in self.graph.triples],
                "text": list(self.references)}


@dataclass(frozen=True)
class Corpus:
    examples: tuple[Example, ...]
    split: str = "train"

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]


def example_from_json(obj, line: int | None = None) -> Example:
    if not isinstance(obj, dict):
        raise CorpusError("expected a JSON object", line)
    if "triples" not in obj or "text" not in obj:
        raise CorpusError("missing 'triples' or 'text' field", line)
    triples = obj["triples"]
    texts = obj["text"]
    if not isinstance(triples, list) or not triples:
        raise CorpusError("'triples' must be a non-empty list", line)
    if isinstance(texts, str):
        texts = [texts]
    parsed = []
    for raw in triples:
        if not isinstance(raw, (list, tuple)) or len(raw) != 3:
            raise CorpusError(f"triple {raw!r} must have exactly 3 components", line)
        try:
            parsed.append(Triple(*raw))
        except CorpusError as err:
            raise CorpusError(str(err), line) from None
    try:
        return Example(KnowledgeGraph(tuple(parsed)), tuple(texts))
    except CorpusError as err:
        raise CorpusError(str(err), line) from None


def parse_corpus(path: str | Path, split: str = "train") -> Corpus:
    """Read a JSON-Lines corpus; one example per non-blank line, file order."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusError(f"malformed JSON: {err.msg}", lineno) from None
            examples.append(example_from_json(obj, lineno))
    return Corpus(tuple(examples), split)


def write_corpus(corpus: Corpus | Iterable[Example], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in corpus:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False) + "\n")


def cluster_by_head(g: KnowledgeGraph) -> KnowledgeGraph:
    """Stable grouping of triples by head label, groups in first-appearance order."""
    groups: dict[str, list[Triple]] = {}
    for t in g.triples:
        groups.setdefault(t.head, []).append(t)
    return KnowledgeGraph(tuple(t for group in groups.values() for t in group))


def cluster_corpus(corpus: Corpus) -> Corpus:
    return Corpus(tuple(Example(cluster_by_head(ex.graph), ex.references) for ex in corpus),
                  corpus.split)
