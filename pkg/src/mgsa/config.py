"""Run configuration: profiles, a flat JSON config file and flag overrides."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .encoder import EncoderConfig
from .model import DecoderConfig
from .train import TrainConfig

PROFILES = {
    "paper": {},
    # invented small settings for CPU toy runs
    "desk": {"d_model": 32, "n_heads": 2, "n_layers": 2, "dropout": 0.0, "lr": 1e-3,
             "warmup_steps": 50, "batch_size": 8},
}

PATH_KEYS = ("train_path", "valid_path", "test_path")
# ablate-only settings
EXTRA_KEYS = {"ablate_seeds": [0], "ablate_task": "direction"}


class ConfigError(ValueError):
    pass


def _names(cls) -> list[str]:
    return [f.name for f in fields(cls)]


@dataclass
class RunConfig:
    encoder: EncoderConfig
    decoder: DecoderConfig
    train: TrainConfig
    paths: dict
    extra: dict

    def to_json(self) -> dict:
        out = {"encoder": asdict(self.encoder), "decoder": asdict(self.decoder),
               "train": asdict(self.train)}
        out.update(paths=dict(self.paths), extra=dict(self.extra))
        return out


def known_keys() -> set[str]:
    keys = set(_names(EncoderConfig)) | set(_names(DecoderConfig)) | set(_names(TrainConfig))
    return keys | set(PATH_KEYS) | set(EXTRA_KEYS)


def load_config_file(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: malformed JSON at line {err.lineno}: {err.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def build_run_config(profile: str = "paper", file_values: dict | None = None,
                     overrides: dict | None = None) -> RunConfig:
    """Merge profile defaults, config-file values and flag overrides, in that order."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    values = dict(PROFILES[profile])
    values.update(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(values) - known_keys())
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    def pick(cls):
        return {k: values[k] for k in _names(cls) if k in values}

    enc_values = pick(EncoderConfig)
    dec_values = pick(DecoderConfig)
    # the decoder shares the encoder's width, head count and depth unless given
    for key in ("d_model", "n_heads", "n_layers"):
        if key in enc_values:
            dec_values.setdefault(key, enc_values[key])
    try:
        enc = EncoderConfig(**enc_values)
        dec = DecoderConfig(**dec_values)
        cfg = TrainConfig(**pick(TrainConfig))
    except TypeError as err:
        raise ConfigError(str(err)) from None
    if enc.d_model != dec.d_model:
        raise ConfigError(f"encoder d_model={enc.d_model} differs from decoder d_model={dec.d_model}")
    paths = {k: values[k] for k in PATH_KEYS if k in values}
    extra = {k: values.get(k, default) for k, default in EXTRA_KEYS.items()}
    return RunConfig(enc, dec, cfg, paths, extra)


def format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"cannot write non-finite float {x} as JSON")
    text = format(x, ".17g")
    # keep integral values recognizably floating point
    return text if any(c in text for c in ".e") else text + ".0"


def dumps(obj, indent: int | None = None, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if hasattr(obj, "tolist"):  # numpy arrays and scalars
        return dumps(obj.tolist(), indent, _level)
    pad = "" if indent is None else "\n" + " " * (indent * (_level + 1))
    end = "" if indent is None else "\n" + " " * (indent * _level)
    sep = ", " if indent is None else ","
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(str(k), ensure_ascii=False) + ": " + dumps(v, indent, _level + 1)
                 for k, v in obj.items()]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + sep.join(pad + dumps(v, indent, _level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")
