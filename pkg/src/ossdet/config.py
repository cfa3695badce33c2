"""Run configuration: flat key=value text files, CLI overrides, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Training / evaluation configuration. Every field is a config-file key
    and a CLI flag of the same name."""

    dataset: str = ""
    out: str = ""
    seed: int = -1  # mandatory; validated before use
    bands_mode: str = "msi8"  # msi8 | rgb3
    channels: int = 32
    sacf_k: int = 3
    cssp_fusion: str = "conv"  # conv | sum
    cafr_softmax: str = "row"  # row | column
    gamma: float = 0.1
    alpha: float = 0.6
    optimizer: str = "sgd"
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    clip_norm: float = 5.0
    iterations: int = 500
    batch_size: int = 2
    checkpoint_every: int = 100
    score_thresh: float = 0.05
    nms_iou: float = 0.5

    def validate(self) -> "RunConfig":
        if self.seed < 0:
            raise ConfigError("seed is mandatory (non-negative integer)")
        if self.bands_mode not in ("msi8", "rgb3"):
            raise ConfigError(f"bands_mode must be msi8 or rgb3, got {self.bands_mode!r}")
        if self.sacf_k not in (3, 5, 7, 9):
            raise ConfigError(f"sacf_k must be one of 3,5,7,9, got {self.sacf_k}")
        if self.optimizer != "sgd":
            raise ConfigError(f"only the sgd optimizer is available, got {self.optimizer!r}")
        if self.gamma <= 0 or self.alpha < 0:
            raise ConfigError("gamma must be > 0 and alpha >= 0")
        if self.batch_size < 1 or self.iterations < 0:
            raise ConfigError("batch_size must be >= 1 and iterations >= 0")
        return self


@dataclass
class GenCliConfig:
    """Dataset generation configuration (the `gen` command)."""

    out: str = ""
    seed: int = -1
    scenes: int = 8
    split: float = 0.7
    image_size: int = 256
    num_classes: int = 6
    instances_min: int = 1
    instances_max: int = 24
    noise_sigma: float = 0.01
    clutter_density: float = 1.0
    illumination: float = 1.0
    max_overlap_iou: float = 0.0
    blur_sigma: float = 0.0
    force: bool = False

    def validate(self) -> "GenCliConfig":
        if self.seed < 0:
            raise ConfigError("seed is mandatory (non-negative integer)")
        if not (0.0 <= self.split <= 1.0):
            raise ConfigError("split must lie in [0, 1]")
        if self.scenes < 0:
            raise ConfigError("scenes must be >= 0")
        return self


def _coerce(value: str, target_type):
    if target_type is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {value!r}")
    return target_type(value)


def to_kv_text(cfg) -> str:
    lines = []
    for f in sorted(dataclasses.fields(cfg), key=lambda f: f.name):
        lines.append(f"{f.name}={getattr(cfg, f.name)!r}"
                     if isinstance(getattr(cfg, f.name), str)
                     else f"{f.name}={getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"


def from_kv_text(text: str, cls):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        ftype = fields[key].type
        target = {"int": int, "float": float, "str": str, "bool": bool}.get(
            ftype if isinstance(ftype, str) else ftype.__name__, str)
        if target is str and value.startswith(("'", '"')) and value.endswith(value[0]):
            value = value[1:-1]
        values[key] = _coerce(value, target)
    return cls(**values)


def load_config(path: str, cls):
    with open(path, "r", encoding="utf-8") as f:
        return from_kv_text(f.read(), cls)


def config_hash(cfg) -> str:
    return hashlib.sha256(to_kv_text(cfg).encode("utf-8")).hexdigest()
