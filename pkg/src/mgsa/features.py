"""Per-example model inputs and padded batches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kg import KnowledgeGraph, cluster_by_head
from .linearize import (BOS_ID, DEFAULT_MAX_INPUT_LEN, EOS_ID, PAD_ID, SpanMap, TokenSequence,
                        Vocab, WordNodeMap, kept_triples, linearize_entity_level,
                        linearize_word_level, tokenize)
from .structure import (EntityRelLabel, StructureMatrices, WordLabels, build_structure,
                        expand_word_labels)
from .tensor import gather_matrix, pool_matrix

DEFAULT_MAX_GEN_LEN = 128


@dataclass
class Features:
    graph: KnowledgeGraph  # after clustering and truncation
    entity_seq: TokenSequence
    spans: SpanMap
    word_seq: TokenSequence
    word_map: WordNodeMap
    matrices: StructureMatrices
    rel_w_tokens: np.ndarray  # n' x n' token-level word labels
    target: np.ndarray | None = None  # reference ids, no <bos>/<eos>

    @property
    def n(self) -> int:
        return len(self.entity_seq)

    @property
    def n_word(self) -> int:
        return len(self.word_seq)


def prepare(graph: KnowledgeGraph, vocab: Vocab, reference: str | None = None, *,
            cluster: bool = True, max_input_len: int = DEFAULT_MAX_INPUT_LEN,
            max_gen_len: int = DEFAULT_MAX_GEN_LEN,
            labels: WordLabels | None = None) -> Features:
    """Cluster, truncate (triple-granular), linearize and build structure matrices."""
    labels = labels or WordLabels()
    if cluster:
        graph = cluster_by_head(graph)
    graph = graph.prefix(kept_triples(graph, max_input_len))
    ent_seq, spans = linearize_entity_level(graph, vocab, max_input_len)
    word_seq, wm = linearize_word_level(graph, vocab, max_input_len)
    sm = build_structure(graph, wm, labels)
    target = None
    if reference is not None:
        target = np.asarray(vocab.ids(tokenize(reference))[:max_gen_len], dtype=np.int64)
    return Features(graph, ent_seq, spans, word_seq, wm, sm,
                    expand_word_labels(sm.rel_w, wm), target)


@dataclass
class Batch:
    ent_ids: np.ndarray    # B x N
    ent_mask: np.ndarray   # B x N, True on real tokens
    pool: np.ndarray       # B x M x N
    gather: np.ndarray     # B x N x M
    unit_mask: np.ndarray  # B x M
    rel_e: np.ndarray      # B x M x M
    adj: np.ndarray        # B x M x M
    word_ids: np.ndarray   # B x W
    word_mask: np.ndarray  # B x W
    rel_w: np.ndarray      # B x W x W
    dec_in: np.ndarray | None = None   # B x K
    dec_out: np.ndarray | None = None  # B x K
    dec_mask: np.ndarray | None = None  # B x K

    @property
    def size(self) -> int:
        return self.ent_ids.shape[0]

    @property
    def enc_mask(self) -> np.ndarray:
        return np.concatenate([self.ent_mask, self.word_mask], axis=1)

    def repeat(self, k: int) -> "Batch":
        """Tile a single-example batch ``k`` times (encoder inputs only)."""
        fields = {name: np.repeat(getattr(self, name), k, axis=0)
                  for name in ("ent_ids", "ent_mask", "pool", "gather", "unit_mask", "rel_e",
                               "adj", "word_ids", "word_mask", "rel_w")}
        return Batch(**fields)


def collate(items: list[Features], labels: WordLabels | None = None,
            with_targets: bool = True) -> Batch:
    labels = labels or WordLabels()
    B = len(items)
    N = max(f.n for f in items)
    M = max(f.graph.m for f in items)
    W = max(f.n_word for f in items)
    ent_ids = np.full((B, N), PAD_ID, dtype=np.int64)
    ent_mask = np.zeros((B, N), dtype=bool)
    pool = np.zeros((B, M, N))
    gather = np.zeros((B, N, M))
    unit_mask = np.zeros((B, M), dtype=bool)
    rel_e = np.full((B, M, M), EntityRelLabel.NONE, dtype=np.int64)
    adj = np.zeros((B, M, M))
    word_ids = np.full((B, W), PAD_ID, dtype=np.int64)
    word_mask = np.zeros((B, W), dtype=bool)
    rel_w = np.full((B, W, W), labels.UNREACHABLE, dtype=np.int64)
    for b, f in enumerate(items):
        n, m, w = f.n, f.graph.m, f.n_word
        ent_ids[b, :n] = f.entity_seq.ids
        ent_mask[b, :n] = True
        pool[b, :m, :n] = pool_matrix(f.spans.units, m)
        gather[b, :n, :m] = gather_matrix(f.spans.units, m)
        unit_mask[b, :m] = True
        rel_e[b, :m, :m] = f.matrices.rel_e
        adj[b, :m, :m] = f.matrices.adj
        word_ids[b, :w] = f.word_seq.ids
        word_mask[b, :w] = True
        rel_w[b, :w, :w] = f.rel_w_tokens
    batch = Batch(ent_ids, ent_mask, pool, gather, unit_mask, rel_e, adj, word_ids, word_mask, rel_w)
    if with_targets and all(f.target is not None for f in items):
        K = max(len(f.target) for f in items) + 1
        batch.dec_in = np.full((B, K), PAD_ID, dtype=np.int64)
        batch.dec_out = np.full((B, K), PAD_ID, dtype=np.int64)
        batch.dec_mask = np.zeros((B, K), dtype=bool)
        for b, f in enumerate(items):
            k = len(f.target)
            batch.dec_in[b, 0] = BOS_ID
            batch.dec_in[b, 1:k + 1] = f.target
            batch.dec_out[b, :k] = f.target
            batch.dec_out[b, k] = EOS_ID
            batch.dec_mask[b, :k + 1] = True
    return batch
