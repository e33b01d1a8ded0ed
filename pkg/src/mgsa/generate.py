"""Greedy and length-normalized beam decoding."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .features import Features, collate, prepare
from .kg import Example, KnowledgeGraph
from .linearize import BOS_ID, EOS_ID
from .model import MGSAModel
from .tensor import Tensor, no_grad

# step function: (k, t) int prefixes -> (k, |V|) next-token log-probabilities
StepFn = Callable[[np.ndarray], np.ndarray]


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def greedy_search(step: StepFn, max_len: int, bos: int = BOS_ID, eos: int = EOS_ID) -> list[int]:
    """Argmax decoding; ties go to the lowest token id. Returns tokens without <bos>/<eos>."""
    seq = [bos]
    for _ in range(max_len):
        tok = int(np.argmax(step(np.array([seq]))[0]))
        if tok == eos:
            break
        seq.append(tok)
    return seq[1:]


def beam_search(step: StepFn, width: int, max_len: int, bos: int = BOS_ID,
                eos: int = EOS_ID) -> list[int]:
    """Beam search scored by cumulative log-prob divided by generated length.

    Each step ranks all expansions by cumulative log-prob (ties: beam order,
    then step log-prob, then token id). An <eos> expansion is finished only when it ranks within
    the top ``width``; the best non-<eos> expansions refill the beam. Search
    stops once ``width`` hypotheses have finished or ``max_len`` tokens
    were generated; in the latter case unfinished beams compete as capped
    hypotheses. The finished length counts the <eos> token.
    """
    if width < 1:
        raise ValueError("beam width must be positive")
    alive: list[tuple[float, list[int]]] = [(0.0, [bos])]
    done: list[tuple[float, int, list[int]]] = []  # (normalized score, arrival, tokens)
    t = 0
    for t in range(1, max_len + 1):
        prefixes = np.array([seq for _, seq in alive])
        lp = step(prefixes)
        cum = np.array([c for c, _ in alive])[:, None] + lp
        vocab = cum.shape[1]
        beam_idx, tok_idx = np.divmod(np.arange(cum.size), vocab)
        # lp breaks ties the addition may have rounded away
        order = np.lexsort((tok_idx, -lp.reshape(-1), beam_idx, -cum.reshape(-1)))
        nxt = []
        for rank, flat in enumerate(order):
            b, tok = int(beam_idx[flat]), int(tok_idx[flat])
            score = float(cum[b, tok])
            if tok == eos:
                if rank < width:
                    done.append((score / t, len(done), alive[b][1][1:]))
            elif len(nxt) < width:
                nxt.append((score, alive[b][1] + [tok]))
            if len(nxt) >= width and rank >= width - 1:
                break
        alive = nxt
        if len(done) >= width or not alive:
            break
    candidates = list(done)
    if t == max_len and alive and len(done) < width:
        candidates += [(c / max_len, len(done) + i, seq[1:]) for i, (c, seq) in enumerate(alive)]
    if not candidates:
        return []
    best = max(candidates, key=lambda c: (c[0], -c[1]))
    return best[2]


def _features(model: MGSAModel, item) -> Features:
    if isinstance(item, Features):
        return item
    graph = item.graph if isinstance(item, Example) else item
    if not isinstance(graph, KnowledgeGraph):
        raise TypeError(f"cannot generate from {type(item).__name__}")
    return prepare(graph, model.vocab, max_input_len=model.enc.max_input_len,
                   labels=model.enc.labels)


def model_step_fn(model: MGSAModel, features: Features) -> StepFn:
    """Encode once; each call runs the decoder over the given prefixes."""
    batch = collate([features], model.enc.labels, with_targets=False)
    with no_grad():
        O = model.encode(batch).data
    mask = batch.enc_mask

    def step(prefixes: np.ndarray) -> np.ndarray:
        k = prefixes.shape[0]
        with no_grad():
            logits = model.decode(Tensor(np.repeat(O, k, axis=0)), np.repeat(mask, k, axis=0),
                                  prefixes)
        return log_softmax(logits.data[:, -1])

    return step


def greedy_generate(model: MGSAModel, item, max_len: int | None = None) -> str:
    step = model_step_fn(model, _features(model, item))
    return model.vocab.decode(greedy_search(step, max_len or model.dec.max_gen_len))


def beam_generate(model: MGSAModel, item, width: int = 5, max_len: int | None = None) -> str:
    step = model_step_fn(model, _features(model, item))
    return model.vocab.decode(beam_search(step, width, max_len or model.dec.max_gen_len))


def generate(model: MGSAModel, item, beam: int = 1, max_len: int | None = None) -> str:
    if beam <= 1:
        return greedy_generate(model, item, max_len)
    return beam_generate(model, item, beam, max_len)
