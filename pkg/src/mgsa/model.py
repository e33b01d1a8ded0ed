"""Encoder-decoder model: parameters, decoder, teacher-forced loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import (EncoderConfig, EncoderOutput, add_attention_params, add_ff_params,
                      add_ln_params, embed, encode_batch, feed_forward, init_encoder_params,
                      key_mask_bias, multi_head_attention, norm, _uniform)
from .features import DEFAULT_MAX_GEN_LEN, Batch, Features, collate
from .linearize import Vocab
from .tensor import (ParamStore, Tensor, add, cross_entropy_nll, dropout, matmul, no_grad,
                     transpose)


@dataclass
class DecoderConfig:
    d_model: int = 768
    n_heads: int = 12
    n_layers: int = 6
    max_gen_len: int = DEFAULT_MAX_GEN_LEN

    def __post_init__(self):
        if min(self.d_model, self.n_heads, self.n_layers, self.max_gen_len) <= 0:
            raise ValueError("decoder sizes must be positive")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")


def causal_bias(k: int) -> np.ndarray:
    return np.triu(np.full((k, k), -1e9), 1)


class MGSAModel:
    """Structure-aware encoder plus a standard post-LN transformer decoder.

    Token embeddings are shared by both linearizations, the decoder input
    and the (tied) output projection.
    """

    def __init__(self, vocab: Vocab, enc: EncoderConfig, dec: DecoderConfig, seed: int = 0):
        if enc.d_model != dec.d_model:
            raise ValueError(f"encoder d_model {enc.d_model} != decoder d_model {dec.d_model}")
        self.vocab = vocab
        self.enc = enc
        self.dec = dec
        self.seed = seed
        self.params = ParamStore()
        rng = np.random.default_rng(seed)
        d = enc.d_model
        self.params.add("emb.tok", _uniform(rng, (len(vocab), d)))
        init_encoder_params(self.params, enc, rng)
        self.params.add("dec.pos", _uniform(rng, (dec.max_gen_len + 1, d)))
        for l in range(dec.n_layers):
            p = f"dec.{l}"
            add_attention_params(self.params, f"{p}.self", d, rng)
            add_ln_params(self.params, f"{p}.ln_self", d)
            add_attention_params(self.params, f"{p}.cross", d, rng)
            add_ln_params(self.params, f"{p}.ln_cross", d)
            add_ff_params(self.params, f"{p}.ff", d, rng)
            add_ln_params(self.params, f"{p}.ln_ff", d)
        self.params.add("out.b", np.zeros(len(vocab)))

    # forward

    def encode(self, batch: Batch, rng=None) -> Tensor:
        return encode_batch(self.params, self.enc, batch, rng)

    def decode(self, O: Tensor, enc_mask: np.ndarray, dec_in: np.ndarray, rng=None) -> Tensor:
        """Next-token logits (B, K, |V|) for decoder inputs ``dec_in`` (B, K)."""
        ps, cfg = self.params, self.dec
        rate = self.enc.dropout
        k = dec_in.shape[1]
        x = dropout(embed(ps, dec_in, "dec.pos"), rate, rng)
        self_bias = causal_bias(k)
        cross_bias = key_mask_bias(enc_mask)
        for l in range(cfg.n_layers):
            p = f"dec.{l}"
            a = dropout(multi_head_attention(ps, f"{p}.self", x, x, cfg.n_heads, self_bias), rate, rng)
            x = norm(ps, f"{p}.ln_self", add(x, a))
            a = dropout(multi_head_attention(ps, f"{p}.cross", x, O, cfg.n_heads, cross_bias), rate, rng)
            x = norm(ps, f"{p}.ln_cross", add(x, a))
            f = dropout(feed_forward(ps, f"{p}.ff", x, self.enc.activation), rate, rng)
            x = norm(ps, f"{p}.ln_ff", add(x, f))
        return add(matmul(x, transpose(ps["emb.tok"], (1, 0))), ps["out.b"])

    def logits(self, batch: Batch, rng=None) -> Tensor:
        return self.decode(self.encode(batch, rng), batch.enc_mask, batch.dec_in, rng)

    def loss(self, batch: Batch, rng=None) -> Tensor:
        """Mean token NLL over non-pad targets (teacher forcing)."""
        return nll_loss(self.logits(batch, rng), batch.dec_out, batch.dec_mask)

    def encode_example(self, features: Features) -> EncoderOutput:
        with no_grad():
            O = self.encode(collate([features], self.enc.labels, with_targets=False))
        return EncoderOutput(O.data[0], features.n)


def nll_loss(logits: Tensor, targets: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    return cross_entropy_nll(logits, targets, mask)
