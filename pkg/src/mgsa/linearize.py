"""Entity-level and word-level linearization, alignment maps and vocabulary."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .kg import Corpus, KnowledgeGraph

H, R, T, N = "<H>", "<R>", "<T>", "[N]"
BOS, EOS, PAD, UNK = "<bos>", "<eos>", "<pad>", "<unk>"
RESERVED = (H, R, T, N, BOS, EOS, PAD, UNK)
H_ID, R_ID, T_ID, N_ID, BOS_ID, EOS_ID, PAD_ID, UNK_ID = range(8)

MARKER = -1
DEFAULT_MAX_INPUT_LEN = 256


class LinearizationError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return text.split()


class Vocab:
    """Token/id tables. Ids 0..7 are the reserved tokens in ``RESERVED`` order."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def token(self, i: int) -> str:
        return self.itos[i]

    def decode(self, ids: Iterable[int]) -> str:
        """Join ids into text, stopping at <eos> and skipping control tokens."""
        words = []
        for i in ids:
            if i == EOS_ID:
                break
            if i in (BOS_ID, PAD_ID):
                continue
            words.append(self.itos[i])
        return " ".join(words)

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, tokens: list[str]) -> "Vocab":
        if tuple(tokens[:len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary does not start with the reserved tokens")
        return cls(tokens[len(RESERVED):])


def build_vocab(corpus: Corpus | Iterable, min_count: int = 1) -> Vocab:
    """Vocabulary over triple words and reference words, first-appearance order."""
    examples = list(corpus)
    if not examples:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts: Counter = Counter()
    order: dict[str, None] = {}
    for ex in examples:
        for t in ex.graph.triples:
            for part in (t.head, t.relation, t.tail):
                for w in tokenize(part):
                    counts[w] += 1
                    order.setdefault(w)
        for ref in ex.references:
            for w in tokenize(ref):
                counts[w] += 1
                order.setdefault(w)
    return Vocab(w for w in order if counts[w] >= min_count)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    tokens: tuple[str, ...]
    n_triples: int  # triples kept after truncation

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class SpanMap:
    """Unit index per token; ``MARKER`` for structural markers."""

    units: tuple[int, ...]
    m: int

    def __len__(self):
        return len(self.units)

    def tokens_of(self, unit: int) -> list[int]:
        return [i for i, u in enumerate(self.units) if u == unit]


@dataclass(frozen=True)
class WordNodeMap:
    """Word-node alignment for a word-level sequence.

    ``token_node[i]`` is the word node of token ``i``; a node owns its [N]
    marker and the following word. Per node: owning unit, 0-based offset of
    the word inside its unit, and the unit occurrence (3 * triple + role,
    role 0/1/2 for head/relation/tail).
    """

    token_node: tuple[int, ...]
    node_unit: tuple[int, ...]
    node_offset: tuple[int, ...]
    node_occurrence: tuple[int, ...]

    @property
    def w(self) -> int:
        return len(self.node_unit)


def _entity_triple_len(g: KnowledgeGraph, k: int) -> int:
    t = g.triples[k]
    return 3 + sum(len(tokenize(x)) for x in (t.head, t.relation, t.tail))


def _word_triple_len(g: KnowledgeGraph, k: int) -> int:
    t = g.triples[k]
    return 2 * sum(len(tokenize(x)) for x in (t.head, t.relation, t.tail))


def _kept_triples(g: KnowledgeGraph, max_len: int, seg_len) -> int:
    total = 0
    for k in range(len(g.triples)):
        seg = seg_len(g, k)
        if total + seg > max_len:
            if k == 0:
                raise LinearizationError(
                    f"triple {g.triples[0].as_list()!r} needs {seg} tokens, "
                    f"more than the maximum input length {max_len}")
            return k
        total += seg
    return len(g.triples)


def kept_triples(g: KnowledgeGraph, max_len: int = DEFAULT_MAX_INPUT_LEN) -> int:
    """Number of leading triples that fit both linearizations within ``max_len``."""
    return min(_kept_triples(g, max_len, _entity_triple_len),
               _kept_triples(g, max_len, _word_triple_len))


def linearize_entity_level(g: KnowledgeGraph, v: Vocab,
                           max_len: int = DEFAULT_MAX_INPUT_LEN) -> tuple[TokenSequence, SpanMap]:
    """<H> head <R> relation <T> tail per triple; whole trailing triples are dropped."""
    k = _kept_triples(g, max_len, _entity_triple_len)
    g = g.prefix(k)
    tokens: list[str] = []
    units: list[int] = []
    for i, t in enumerate(g.triples):
        hu, ru, tu = g.triple_units(i)
        for marker, text, unit in ((H, t.head, hu), (R, t.relation, ru), (T, t.tail, tu)):
            tokens.append(marker)
            units.append(MARKER)
            words = tokenize(text)
            tokens.extend(words)
            units.extend([unit] * len(words))
    return (TokenSequence(tuple(v.ids(tokens)), tuple(tokens), k), SpanMap(tuple(units), g.m))


def linearize_word_level(g: KnowledgeGraph, v: Vocab,
                         max_len: int = DEFAULT_MAX_INPUT_LEN) -> tuple[TokenSequence, WordNodeMap]:
    """[N] word pairs for every word of every head/relation/tail occurrence."""
    k = _kept_triples(g, max_len, _word_triple_len)
    g = g.prefix(k)
    tokens: list[str] = []
    token_node: list[int] = []
    node_unit: list[int] = []
    node_offset: list[int] = []
    node_occ: list[int] = []
    for i, t in enumerate(g.triples):
        for role, (text, unit) in enumerate(zip((t.head, t.relation, t.tail), g.triple_units(i))):
            for offset, word in enumerate(tokenize(text)):
                node = len(node_unit)
                tokens.extend((N, word))
                token_node.extend((node, node))
                node_unit.append(unit)
                node_offset.append(offset)
                node_occ.append(3 * i + role)
    wm = WordNodeMap(tuple(token_node), tuple(node_unit), tuple(node_offset), tuple(node_occ))
    return TokenSequence(tuple(v.ids(tokens)), tuple(tokens), k), wm


def parse_entity_sequence(tokens: Iterable[str]) -> list[tuple[str, str, str]]:
    """Inverse of the entity-level template: recover the triple list from tokens."""
    triples = []
    current: dict[str, list[str]] = {}
    slot = None
    for tok in tokens:
        if tok == H:
            if current:
                triples.append(current)
            current = {H: [], R: [], T: []}
            slot = H
        elif tok in (R, T):
            slot = tok
        else:
            if slot is None:
                raise LinearizationError("word before the first <H> marker")
            current[slot].append(tok)
    if current:
        triples.append(current)
    return [(" ".join(c[H]), " ".join(c[R]), " ".join(c[T])) for c in triples]
