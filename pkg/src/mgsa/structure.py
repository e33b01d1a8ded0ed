"""Bipartite and word-level graphs and the structure matrices built on them.

Entity-level labels (``rel_pos_entity``) and the adjacency matrix live on the
m units of a :class:`~mgsa.kg.KnowledgeGraph`; word-level labels
(``rel_pos_word``) live on the word nodes of the word-level linearization.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .kg import KnowledgeGraph
from .linearize import WordNodeMap

DEFAULT_D_CLIP = 16
DEFAULT_P_CLIP = 16


class EntityRelLabel(IntEnum):
    NONE = 0
    ENT_ENT = 1
    ENT_REL = 2
    REL_ENT = 3
    SELF = 4


NUM_ENTITY_LABELS = len(EntityRelLabel)


class WordLabels:
    """Dense integer coding of word-level relative position labels.

    Layout: SELF, FWD(1..D), BWD(1..D), SAME_FWD(1..P), SAME_BWD(1..P),
    UNREACHABLE. The kinds occupy disjoint id ranges, so intra-unit offsets
    never collide with path distances.
    """

    def __init__(self, d_clip: int = DEFAULT_D_CLIP, p_clip: int = DEFAULT_P_CLIP):
        if d_clip < 1 or p_clip < 1:
            raise ValueError("clip values must be positive")
        self.d_clip = d_clip
        self.p_clip = p_clip
        self.SELF = 0
        self.UNREACHABLE = 1 + 2 * d_clip + 2 * p_clip

    def __len__(self):
        return self.UNREACHABLE + 1

    def __eq__(self, other):
        return isinstance(other, WordLabels) and (self.d_clip, self.p_clip) == (other.d_clip, other.p_clip)

    def fwd(self, d):
        return np.minimum(d, self.d_clip)

    def bwd(self, d):
        return self.d_clip + np.minimum(d, self.d_clip)

    def same_fwd(self, p):
        return 2 * self.d_clip + np.minimum(p, self.p_clip)

    def same_bwd(self, p):
        return 2 * self.d_clip + self.p_clip + np.minimum(p, self.p_clip)

    def name(self, label: int) -> str:
        label = int(label)
        D, P = self.d_clip, self.p_clip
        if label == self.SELF:
            return "SELF"
        if label == self.UNREACHABLE:
            return "UNREACHABLE"
        if label <= D:
            return f"FWD({label})"
        if label <= 2 * D:
            return f"BWD({label - D})"
        if label <= 2 * D + P:
            return f"SAME_FWD({label - 2 * D})"
        if label <= 2 * D + 2 * P:
            return f"SAME_BWD({label - 2 * D - P})"
        raise ValueError(f"label id {label} out of range")


@dataclass(frozen=True)
class BipartiteGraph:
    """Entities on one side, relation occurrences on the other.

    ``edges`` holds oriented incidences: (head_unit, rel_unit) and
    (rel_unit, tail_unit) for every triple.
    """

    m: int
    num_entities: int
    edges: tuple[tuple[int, int], ...]

    def incidence(self) -> np.ndarray:
        """Boolean entity x relation incidence, orientation dropped."""
        inc = np.zeros((self.num_entities, self.m - self.num_entities), dtype=bool)
        for a, b in self.edges:
            e, r = (a, b) if a < self.num_entities else (b, a)
            inc[e, r - self.num_entities] = True
        return inc


def build_bipartite(g: KnowledgeGraph) -> BipartiteGraph:
    edges = []
    for i in range(len(g.triples)):
        hu, ru, tu = g.triple_units(i)
        edges.append((hu, ru))
        edges.append((ru, tu))
    return BipartiteGraph(g.m, g.num_entities, tuple(edges))


def rel_pos_entity(b: BipartiteGraph) -> np.ndarray:
    """m x m matrix of :class:`EntityRelLabel` values."""
    ne = b.num_entities
    inc = b.incidence()
    labels = np.full((b.m, b.m), EntityRelLabel.NONE, dtype=np.int64)
    linked = (inc.astype(np.int64) @ inc.T.astype(np.int64)) > 0
    labels[:ne, :ne][linked] = EntityRelLabel.ENT_ENT
    labels[:ne, ne:][inc] = EntityRelLabel.ENT_REL
    labels[ne:, :ne][inc.T] = EntityRelLabel.REL_ENT
    np.fill_diagonal(labels, EntityRelLabel.SELF)
    return labels


def adjacency(b: BipartiteGraph) -> np.ndarray:
    """Symmetric 0/1 incidence matrix with self-loops."""
    adj = np.eye(b.m)
    for a, c in b.edges:
        adj[a, c] = adj[c, a] = 1.0
    return adj


def build_word_graph(g: KnowledgeGraph, wm: WordNodeMap) -> list[list[int]]:
    """Directed successor lists over word nodes.

    Every word of a head occurrence points to every word of its relation
    occurrence, which in turn point to every word of the tail occurrence.
    """
    by_occ: dict[int, list[int]] = {}
    for node, occ in enumerate(wm.node_occurrence):
        by_occ.setdefault(occ, []).append(node)
    succ: list[list[int]] = [[] for _ in range(wm.w)]
    for i in range(len(g.triples)):
        head, rel, tail = (by_occ.get(3 * i + r, []) for r in range(3))
        for src, dst in ((head, rel), (rel, tail)):
            for u in src:
                succ[u].extend(dst)
    return succ


def shortest_paths(succ: list[list[int]]) -> np.ndarray:
    """All-pairs unit-weight directed distances by BFS; ``inf`` if unreachable."""
    w = len(succ)
    dist = np.full((w, w), np.inf)
    for s in range(w):
        dist[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            du = dist[s, u] + 1
            for v in succ[u]:
                if dist[s, v] == np.inf:
                    dist[s, v] = du
                    queue.append(v)
    return dist


def rel_pos_word(dist: np.ndarray, wm: WordNodeMap, labels: WordLabels | None = None) -> np.ndarray:
    """w x w word-level label ids (see :class:`WordLabels`)."""
    labels = labels or WordLabels()
    w = wm.w
    if dist.shape != (w, w):
        raise ValueError(f"distance table shape {dist.shape} does not match {w} word nodes")
    d_ij = dist
    d_ji = dist.T
    out = np.full((w, w), labels.UNREACHABLE, dtype=np.int64)
    fwd = np.isfinite(d_ij) & (d_ij <= d_ji)
    bwd = np.isfinite(d_ji) & ~fwd
    with np.errstate(invalid="ignore"):
        out[fwd] = labels.fwd(d_ij[fwd].astype(np.int64))
        out[bwd] = labels.bwd(d_ji[bwd].astype(np.int64))
    occ = np.asarray(wm.node_occurrence)
    off = np.asarray(wm.node_offset)
    same = occ[:, None] == occ[None, :]
    p = off[None, :] - off[:, None]
    out[same & (p > 0)] = labels.same_fwd(p[same & (p > 0)])
    out[same & (p < 0)] = labels.same_bwd(-p[same & (p < 0)])
    np.fill_diagonal(out, labels.SELF)
    return out


def expand_word_labels(rel_w: np.ndarray, wm: WordNodeMap) -> np.ndarray:
    """Lift word-node labels to token resolution; tokens of one node pair as SELF."""
    idx = np.asarray(wm.token_node, dtype=np.int64)
    return rel_w[np.ix_(idx, idx)]


@dataclass(frozen=True)
class StructureMatrices:
    rel_e: np.ndarray
    adj: np.ndarray
    rel_w: np.ndarray


def build_structure(g: KnowledgeGraph, wm: WordNodeMap,
                    labels: WordLabels | None = None) -> StructureMatrices:
    b = build_bipartite(g)
    dist = shortest_paths(build_word_graph(g, wm))
    return StructureMatrices(rel_pos_entity(b), adjacency(b), rel_pos_word(dist, wm, labels))


def structure_to_json(g: KnowledgeGraph, sm: StructureMatrices,
                      labels: WordLabels | None = None) -> dict:
    labels = labels or WordLabels()
    return {
        "units": g.unit_labels(),
        "rel_e": [[EntityRelLabel(int(x)).name for x in row] for row in sm.rel_e],
        "adj": sm.adj.astype(int).tolist(),
        "rel_w": [[labels.name(x) for x in row] for row in sm.rel_w],
    }
