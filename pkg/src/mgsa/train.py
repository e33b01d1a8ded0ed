"""Adam training with linear warmup and a per-step loss log."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .features import Features, collate
from .model import MGSAModel

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 16
    lr: float = 2e-5
    warmup_steps: int = 1600
    adam_eps: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    beam: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.warmup_steps < 0 or self.beam <= 0:
            raise ValueError("epochs, batch_size, warmup_steps and beam must be positive")
        if self.lr < 0 or self.adam_eps <= 0:
            raise ValueError("lr must be non-negative and adam_eps positive")


class TrainingDiverged(FloatingPointError):
    pass


class Adam:
    def __init__(self, params, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def lr(self) -> float:
        """Rate for the next step: linear warmup, then constant."""
        step = self.t + 1
        if self.cfg.warmup_steps and step < self.cfg.warmup_steps:
            return self.cfg.lr * step / self.cfg.warmup_steps
        return self.cfg.lr

    def step(self):
        lr = self.lr()
        self.t += 1
        b1, b2 = self.cfg.beta1, self.cfg.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None or lr == 0.0:
                continue
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p.data -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.cfg.adam_eps)


@dataclass
class TrainLog:
    steps: list = field(default_factory=list)   # (epoch, step, loss)
    epochs: list = field(default_factory=list)  # mean loss per epoch

    def write_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "step", "loss"])
            for epoch, step, loss in self.steps:
                w.writerow([epoch, step, format(loss, ".17g")])


def _param_norms(model: MGSAModel) -> str:
    norms = {k: float(np.linalg.norm(p.data)) for k, p in model.params.items()}
    worst = sorted(norms.items(), key=lambda kv: -kv[1] if np.isfinite(kv[1]) else -np.inf)[:5]
    return ", ".join(f"{k}={v:.3g}" for k, v in worst)


def train(model: MGSAModel, data: list[Features], cfg: TrainConfig,
          checkpoint_dir: str | Path | None = None, on_epoch=None) -> TrainLog:
    """Teacher-forced NLL training; deterministic given ``cfg.seed``.

    ``on_epoch(epoch, mean_loss)`` may return True to stop early. When
    ``checkpoint_dir`` is given a checkpoint is written after every epoch.
    """
    from .checkpoint import save_checkpoint

    if any(f.target is None for f in data):
        raise ValueError("training features need target references")
    total = cfg.epochs * -(-len(data) // cfg.batch_size)
    if cfg.warmup_steps > total:
        raise ValueError(f"warmup_steps={cfg.warmup_steps} exceeds the {total} training steps")
    rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng(cfg.seed + 1) if model.enc.dropout > 0 else None
    opt = Adam(model.params, cfg)
    history = TrainLog()
    labels = model.enc.labels
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        losses, weights = [], []
        for start in range(0, len(order), cfg.batch_size):
            batch = collate([data[i] for i in order[start:start + cfg.batch_size]], labels)
            model.params.zero_grad()
            loss = model.loss(batch, drop_rng)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch}, step {opt.t + 1}; "
                    f"largest parameter norms: {_param_norms(model)}")
            loss.backward()
            opt.step()
            history.steps.append((epoch, opt.t, value))
            losses.append(value)
            weights.append(batch.dec_mask.sum())
        mean = float(np.average(losses, weights=weights))
        history.epochs.append(mean)
        log.info("epoch %d loss %.6f", epoch, mean)
        if checkpoint_dir is not None:
            save_checkpoint(model, Path(checkpoint_dir) / f"epoch_{epoch:03d}.ckpt",
                            {"epoch": epoch, "loss": mean})
        if on_epoch is not None and on_epoch(epoch, mean):
            break
    return history


def training_features(examples: Iterable, vocab, enc_cfg, max_gen_len: int) -> list[Features]:
    """One feature set per (graph, reference) pair."""
    from .features import prepare

    out = []
    for ex in examples:
        for ref in ex.references:
            out.append(prepare(ex.graph, vocab, ref, max_input_len=enc_cfg.max_input_len,
                               max_gen_len=max_gen_len, labels=enc_cfg.labels))
    return out
