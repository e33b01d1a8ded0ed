"""Ablation arms and the lambda sweep.

Arms switch structure inputs off (zeroed bias tables or adjacency, or a zero
word-module weight) rather than removing layers, so every arm has the same
parameter count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .encoder import EncoderConfig
from .features import prepare
from .generate import generate
from .kg import Example
from .linearize import build_vocab
from .metrics import bleu4, rouge_l
from .model import DecoderConfig, MGSAModel
from .toy import exact_match
from .train import TrainConfig, train, training_features

log = logging.getLogger(__name__)

LAMBDA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def switch_arms(enc: EncoderConfig) -> dict[str, EncoderConfig]:
    """The full model plus one arm per structure input turned off, plus all off."""
    return {
        "full": enc,
        "no_adjacency": replace(enc, use_adjacency=False),
        "no_entity_bias": replace(enc, use_entity_bias=False),
        "no_word_module": replace(enc, lam=0.0),
        "no_word_bias": replace(enc, use_word_bias=False),
        "no_structure": zeroed(enc),
    }


def zeroed(enc: EncoderConfig) -> EncoderConfig:
    """Adjacency, entity bias and word bias all switched off."""
    return replace(enc, use_adjacency=False, use_entity_bias=False, use_word_bias=False)


def lambda_arms(enc: EncoderConfig, grid=LAMBDA_GRID) -> dict[str, EncoderConfig]:
    return {f"lambda={lam:g}": replace(enc, lam=float(lam)) for lam in grid}


@dataclass
class ArmResult:
    name: str
    seed: int
    bleu4: float
    rougeL: float
    exact_match: float
    final_loss: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def run_arm(name: str, train_set: list[Example], test_set: list[Example], enc: EncoderConfig,
            dec: DecoderConfig, cfg: TrainConfig, seed: int, beam: int = 1) -> ArmResult:
    """Train one arm from scratch and score it on ``test_set``."""
    vocab = build_vocab(train_set)
    model = MGSAModel(vocab, enc, dec, seed=seed)
    feats = training_features(train_set, vocab, enc, dec.max_gen_len)
    history = train(model, feats, replace(cfg, seed=seed))
    outputs = [generate(model, prepare(ex.graph, vocab, max_input_len=enc.max_input_len,
                                       labels=enc.labels), beam=beam)
               for ex in test_set]
    refs = [ex.references for ex in test_set]
    res = ArmResult(name, seed, bleu4(outputs, refs), rouge_l(outputs, refs),
                    exact_match(outputs, test_set),
                    history.epochs[-1] if history.epochs else float("nan"))
    log.info("%s seed=%d bleu4=%.2f rougeL=%.2f em=%.1f", name, seed, res.bleu4, res.rougeL,
             res.exact_match)
    return res


def run_arms(arms: dict[str, EncoderConfig], train_set, test_set, dec: DecoderConfig,
             cfg: TrainConfig, seeds=(0,), beam: int = 1) -> list[ArmResult]:
    return [run_arm(name, train_set, test_set, enc, dec, cfg, seed, beam)
            for name, enc in arms.items() for seed in seeds]


def summarize(results: list[ArmResult]) -> list[dict]:
    """Median of every score per arm, in first-seen arm order."""
    names = list(dict.fromkeys(r.name for r in results))
    table = []
    for name in names:
        rows = [r for r in results if r.name == name]
        table.append({
            "arm": name,
            "seeds": [r.seed for r in rows],
            "bleu4": float(np.median([r.bleu4 for r in rows])),
            "rougeL": float(np.median([r.rougeL for r in rows])),
            "exact_match": float(np.median([r.exact_match for r in rows])),
        })
    return table


def format_table(table: list[dict]) -> str:
    lines = [f"{'arm':<16} {'bleu4':>8} {'rougeL':>8} {'exact':>8}"]
    lines += [f"{row['arm']:<16} {row['bleu4']:8.2f} {row['rougeL']:8.2f} {row['exact_match']:8.1f}"
              for row in table]
    return "\n".join(lines)
