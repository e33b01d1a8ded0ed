"""Single-file checkpoints.

Layout: one line of UTF-8 JSON (config, vocabulary and a manifest of
parameter names and shapes) terminated by ``\\n``, then the parameter
values as little-endian float64 in manifest order.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig
from .linearize import Vocab
from .model import DecoderConfig, MGSAModel

FORMAT = "mgsa-checkpoint-1"


def save_checkpoint(model: MGSAModel, path: str | Path, extra: dict | None = None) -> None:
    manifest = [{"name": k, "shape": list(p.shape)} for k, p in model.params.items()]
    header = {
        "format": FORMAT,
        "encoder": asdict(model.enc),
        "decoder": asdict(model.dec),
        "seed": model.seed,
        "vocab": model.vocab.to_list(),
        "params": manifest,
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, ensure_ascii=False).encode("utf-8") + b"\n")
        for k, p in model.params.items():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return json.loads(fh.readline().decode("utf-8"))


def load_checkpoint(path: str | Path) -> MGSAModel:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = fh.read()
    if header.get("format") != FORMAT:
        raise ValueError(f"{path}: not an {FORMAT} file")
    model = MGSAModel(Vocab.from_list(header["vocab"]), EncoderConfig(**header["encoder"]),
                      DecoderConfig(**header["decoder"]), seed=header["seed"])
    values = np.frombuffer(payload, dtype="<f8")
    expected = sum(int(np.prod(e["shape"])) for e in header["params"])
    if values.size != expected:
        raise ValueError(f"{path}: payload holds {values.size} values, manifest needs {expected}")
    offset = 0
    for entry in header["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        size = int(np.prod(shape))
        if model.params[name].shape != shape:
            raise ValueError(f"{path}: parameter {name} has shape {shape}, model expects "
                             f"{model.params[name].shape}")
        model.params[name].data[...] = values[offset:offset + size].reshape(shape)
        offset += size
    return model
