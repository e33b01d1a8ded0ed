"""Multi-granularity structure-biased encoder.

Two parallel stacks run over the two linearizations of a graph:

* entity layers: token self-attention, mean pooling onto units, unit
  attention biased by the bipartite adjacency and entity labels, gather back
  to tokens with a residual to the token stream, then feed-forward;
* word layers: token self-attention biased by word-level path labels.

The stack outputs are concatenated along the sequence axis (word half scaled
by ``lam``) and fused by one more attention + feed-forward block.

Every function accepts a batch axis; inputs of shape (L, d) are treated as a
batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import Batch
from .linearize import DEFAULT_MAX_INPUT_LEN, SpanMap
from .structure import DEFAULT_D_CLIP, DEFAULT_P_CLIP, NUM_ENTITY_LABELS, WordLabels
from .tensor import (ParamStore, Tensor, add, as_tensor, bias_lookup, concat_sequence, dropout,
                     embedding_lookup, feed_forward_2layer, layer_norm, linear, matmul,
                     pool_matrix, gather_matrix, reshape, scale, softmax_rows, transpose)

INIT_RANGE = 0.08
MASK_VALUE = -1e9


@dataclass
class EncoderConfig:
    d_model: int = 768
    n_heads: int = 12
    n_layers: int = 6
    lam: float = 0.5
    d_clip: int = DEFAULT_D_CLIP
    p_clip: int = DEFAULT_P_CLIP
    max_input_len: int = DEFAULT_MAX_INPUT_LEN
    dropout: float = 0.1
    activation: str = "gelu"
    # ablation switches; off means the bias term is never added
    use_adjacency: bool = True
    use_entity_bias: bool = True
    use_word_bias: bool = True

    def __post_init__(self):
        if self.d_model <= 0 or self.n_heads <= 0 or self.n_layers <= 0:
            raise ValueError("d_model, n_heads and n_layers must be positive")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam={self.lam} outside [0, 1]")
        if self.d_clip <= 0 or self.p_clip <= 0 or self.max_input_len <= 0:
            raise ValueError("clip values and max_input_len must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout={self.dropout} outside [0, 1)")

    @property
    def labels(self) -> WordLabels:
        return WordLabels(self.d_clip, self.p_clip)


@dataclass
class EncoderOutput:
    O: np.ndarray  # (n + n') x d_model
    boundary: int  # n, first word-level row

    def __len__(self):
        return self.O.shape[0]


# parameter construction


def _uniform(rng, shape):
    return rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)


def add_attention_params(ps: ParamStore, prefix: str, d: int, rng: np.random.Generator):
    # no key bias: it shifts every logit of a query row equally, so softmax ignores it
    for name in ("q", "k", "v", "o"):
        ps.add(f"{prefix}.w{name}", _uniform(rng, (d, d)))
        if name != "k":
            ps.add(f"{prefix}.b{name}", np.zeros(d))


def add_ff_params(ps: ParamStore, prefix: str, d: int, rng: np.random.Generator):
    ps.add(f"{prefix}.w1", _uniform(rng, (d, 4 * d)))
    ps.add(f"{prefix}.b1", np.zeros(4 * d))
    ps.add(f"{prefix}.w2", _uniform(rng, (4 * d, d)))
    ps.add(f"{prefix}.b2", np.zeros(d))


def add_ln_params(ps: ParamStore, prefix: str, d: int):
    ps.add(f"{prefix}.g", np.ones(d))
    ps.add(f"{prefix}.b", np.zeros(d))


def init_encoder_params(ps: ParamStore, cfg: EncoderConfig, rng: np.random.Generator):
    """Encoder parameters; token embeddings ("emb.tok") are owned by the model."""
    d, H = cfg.d_model, cfg.n_heads
    ps.add("enc.pos", _uniform(rng, (cfg.max_input_len, d)))
    for l in range(cfg.n_layers):
        p = f"enc.ent.{l}"
        add_attention_params(ps, f"{p}.lin", d, rng)
        add_ln_params(ps, f"{p}.ln_lin", d)
        add_attention_params(ps, f"{p}.struct", d, rng)
        ps.add(f"{p}.bias", np.zeros((H, NUM_ENTITY_LABELS)))
        add_ff_params(ps, f"{p}.ff", d, rng)
        add_ln_params(ps, f"{p}.ln_ff", d)
    for l in range(cfg.n_layers):
        p = f"enc.word.{l}"
        add_attention_params(ps, f"{p}.attn", d, rng)
        ps.add(f"{p}.bias", np.zeros((H, len(cfg.labels))))
        add_ln_params(ps, f"{p}.ln_attn", d)
        add_ff_params(ps, f"{p}.ff", d, rng)
        add_ln_params(ps, f"{p}.ln_ff", d)
    add_attention_params(ps, "enc.agg.attn", d, rng)
    add_ff_params(ps, "enc.agg.ff", d, rng)
    add_ln_params(ps, "enc.agg.ln", d)


# building blocks


def key_mask_bias(mask: np.ndarray) -> np.ndarray:
    """(B, Lk) boolean mask -> additive (B, 1, 1, Lk) logit bias."""
    return np.where(mask, 0.0, MASK_VALUE)[:, None, None, :]


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    x = as_tensor(x)
    if x.ndim == 2:
        return reshape(x, (1,) + x.shape), True
    return x, False


def multi_head_attention(ps: ParamStore, prefix: str, x_q, x_kv, n_heads: int,
                         bias=None) -> Tensor:
    """softmax(Q K^T / sqrt(d_head) + bias) V per head, then the output projection.

    ``bias`` broadcasts against (B, H, Lq, Lk); it may be an array or a Tensor.
    """
    x_q, squeeze = _batched(x_q)
    x_kv, _ = _batched(x_kv)
    B, Lq, d = x_q.shape
    Lk = x_kv.shape[1]
    dh = d // n_heads
    q = transpose(reshape(linear(x_q, ps[f"{prefix}.wq"], ps[f"{prefix}.bq"]), (B, Lq, n_heads, dh)),
                  (0, 2, 1, 3))
    k = transpose(reshape(linear(x_kv, ps[f"{prefix}.wk"]), (B, Lk, n_heads, dh)),
                  (0, 2, 3, 1))
    v = transpose(reshape(linear(x_kv, ps[f"{prefix}.wv"], ps[f"{prefix}.bv"]), (B, Lk, n_heads, dh)),
                  (0, 2, 1, 3))
    scores = scale(matmul(q, k), 1.0 / np.sqrt(dh))
    if bias is not None:
        scores = add(scores, bias)
    ctx = matmul(softmax_rows(scores), v)
    out = reshape(transpose(ctx, (0, 2, 1, 3)), (B, Lq, d))
    out = linear(out, ps[f"{prefix}.wo"], ps[f"{prefix}.bo"])
    return reshape(out, (Lq, d)) if squeeze else out


def attention_logits(ps: ParamStore, prefix: str, x, n_heads: int, bias=None) -> np.ndarray:
    """Pre-softmax logits of :func:`multi_head_attention` (for inspection)."""
    x, _ = _batched(x)
    B, L, d = x.shape
    dh = d // n_heads
    q = (x.data @ ps[f"{prefix}.wq"].data + ps[f"{prefix}.bq"].data).reshape(B, L, n_heads, dh)
    k = (x.data @ ps[f"{prefix}.wk"].data).reshape(B, L, n_heads, dh)
    scores = np.einsum("bqhd,bkhd->bhqk", q, k) / np.sqrt(dh)
    if bias is not None:
        scores = scores + as_tensor(bias).data
    return scores


def feed_forward(ps: ParamStore, prefix: str, x, activation: str) -> Tensor:
    return feed_forward_2layer(x, ps[f"{prefix}.w1"], ps[f"{prefix}.b1"],
                               ps[f"{prefix}.w2"], ps[f"{prefix}.b2"], activation)


def norm(ps: ParamStore, prefix: str, x) -> Tensor:
    return layer_norm(x, ps[f"{prefix}.g"], ps[f"{prefix}.b"])


def linear_attention(ps: ParamStore, prefix: str, x, n_heads: int, key_mask=None) -> Tensor:
    """Plain multi-head self-attention over the entity-level tokens."""
    bias = None if key_mask is None else key_mask_bias(np.atleast_2d(key_mask))
    return multi_head_attention(ps, prefix, x, x, n_heads, bias)


def pool_units(x_lin, spans) -> Tensor:
    """Mean of each unit's tokens; ``spans`` is a SpanMap or a (B, M, N) pooling matrix."""
    if isinstance(spans, SpanMap):
        spans = pool_matrix(spans.units, spans.m)
    return matmul(spans, x_lin)


def gather(x_units, spans) -> Tensor:
    """Write unit rows back to their tokens; markers receive zeros."""
    if isinstance(spans, SpanMap):
        spans = gather_matrix(spans.units, spans.m)
    return matmul(spans, x_units)


def entity_bias(ps: ParamStore, prefix: str, adj, rel_e, cfg: EncoderConfig, unit_mask=None):
    """A + gamma(R^E) (+ padding mask) as a logit bias broadcastable to (B, H, M, M)."""
    adj = np.asarray(adj)
    rel_e = np.asarray(rel_e)
    if adj.ndim == 2:
        adj, rel_e = adj[None], rel_e[None]
    const = np.zeros(adj.shape)[:, None]
    if cfg.use_adjacency:
        const = const + adj[:, None]
    if unit_mask is not None:
        const = const + key_mask_bias(np.atleast_2d(unit_mask))
    if cfg.use_entity_bias:
        return add(bias_lookup(ps[f"{prefix}.bias"], rel_e), const)
    return const


def entity_structure_attention(ps: ParamStore, prefix: str, x_p, adj, rel_e,
                               cfg: EncoderConfig, unit_mask=None) -> Tensor:
    bias = entity_bias(ps, prefix, adj, rel_e, cfg, unit_mask)
    return multi_head_attention(ps, f"{prefix}.struct", x_p, x_p, cfg.n_heads, bias)


def entity_layer(ps: ParamStore, prefix: str, x, pool, gather_m, adj, rel_e, cfg: EncoderConfig,
                 key_mask=None, unit_mask=None, rng=None, return_parts: bool = False):
    """One entity-level block.

    x_lin = LN(x + SelfAttn(x)); x_g = StructAttn(pool(x_lin));
    x_t = gather(x_g) + x_lin; out = LN(x_t + FF(x_t)).
    """
    att = dropout(linear_attention(ps, f"{prefix}.lin", x, cfg.n_heads, key_mask), cfg.dropout, rng)
    x_lin = norm(ps, f"{prefix}.ln_lin", add(x, att))
    x_p = pool_units(x_lin, pool)
    x_g = dropout(entity_structure_attention(ps, prefix, x_p, adj, rel_e, cfg, unit_mask),
                  cfg.dropout, rng)
    x_t = add(gather(x_g, gather_m), x_lin)
    ff = dropout(feed_forward(ps, f"{prefix}.ff", x_t, cfg.activation), cfg.dropout, rng)
    out = norm(ps, f"{prefix}.ln_ff", add(x_t, ff))
    if return_parts:
        return out, {"x_lin": x_lin, "x_p": x_p, "x_g": x_g, "x_t": x_t}
    return out


def word_bias(ps: ParamStore, prefix: str, rel_w, cfg: EncoderConfig, key_mask=None):
    rel_w = np.asarray(rel_w)
    if rel_w.ndim == 2:
        rel_w = rel_w[None]
    const = None if key_mask is None else key_mask_bias(np.atleast_2d(key_mask))
    if not cfg.use_word_bias:
        return const
    b = bias_lookup(ps[f"{prefix}.bias"], rel_w)
    return b if const is None else add(b, const)


def word_structure_attention(ps: ParamStore, prefix: str, x, rel_w, cfg: EncoderConfig,
                             key_mask=None) -> Tensor:
    """softmax(Q K^T / sqrt(d_head) + gamma(R^N)) V over token-level word labels."""
    return multi_head_attention(ps, f"{prefix}.attn", x, x, cfg.n_heads,
                                word_bias(ps, prefix, rel_w, cfg, key_mask))


def word_layer(ps: ParamStore, prefix: str, x, rel_w, cfg: EncoderConfig, key_mask=None,
               rng=None) -> Tensor:
    att = dropout(word_structure_attention(ps, prefix, x, rel_w, cfg, key_mask), cfg.dropout, rng)
    h = norm(ps, f"{prefix}.ln_attn", add(x, att))
    ff = dropout(feed_forward(ps, f"{prefix}.ff", h, cfg.activation), cfg.dropout, rng)
    return norm(ps, f"{prefix}.ln_ff", add(h, ff))


def aggregate(ps: ParamStore, x_e, x_w, cfg: EncoderConfig, key_mask=None, rng=None,
              prefix: str = "enc.agg") -> Tensor:
    """c = [x_e ; lam * x_w]; x_c = SelfAttn(c); O = LN(FF(x_c + c) + x_c)."""
    x_e, squeeze = _batched(x_e)
    x_w, _ = _batched(x_w)
    c = concat_sequence([x_e, scale(x_w, cfg.lam)], axis=1)
    bias = None if key_mask is None else key_mask_bias(np.atleast_2d(key_mask))
    x_c = dropout(multi_head_attention(ps, f"{prefix}.attn", c, c, cfg.n_heads, bias),
                  cfg.dropout, rng)
    ff = dropout(feed_forward(ps, f"{prefix}.ff", add(x_c, c), cfg.activation), cfg.dropout, rng)
    out = norm(ps, f"{prefix}.ln", add(ff, x_c))
    return reshape(out, out.shape[1:]) if squeeze else out


def embed(ps: ParamStore, ids: np.ndarray, pos_name: str) -> Tensor:
    ids = np.asarray(ids)
    L = ids.shape[-1]
    pos = ps[pos_name]
    if L > pos.shape[0]:
        raise ValueError(f"sequence of length {L} exceeds the {pos.shape[0]} learned positions")
    return add(embedding_lookup(ps["emb.tok"], ids), embedding_lookup(pos, np.arange(L)))


def encode_batch(ps: ParamStore, cfg: EncoderConfig, batch: Batch, rng=None) -> Tensor:
    """Fused representation O of shape (B, N + W, d); pair with ``batch.enc_mask``."""
    x = dropout(embed(ps, batch.ent_ids, "enc.pos"), cfg.dropout, rng)
    for l in range(cfg.n_layers):
        x = entity_layer(ps, f"enc.ent.{l}", x, batch.pool, batch.gather, batch.adj, batch.rel_e,
                         cfg, batch.ent_mask, batch.unit_mask, rng)
    xw = dropout(embed(ps, batch.word_ids, "enc.pos"), cfg.dropout, rng)
    for l in range(cfg.n_layers):
        xw = word_layer(ps, f"enc.word.{l}", xw, batch.rel_w, cfg, batch.word_mask, rng)
    return aggregate(ps, x, xw, cfg, batch.enc_mask, rng)
