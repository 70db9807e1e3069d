"""Model and training configuration, plus the flat ``key=value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError
from .modality import parse_setting

MIWG_MODES = ("recursive", "indicator")


@dataclass(frozen=True)
class ModelConfig:
    widths: tuple[int, ...] = (16, 32, 64, 128, 256)
    num_modalities: int = 3
    miwg_mode: str = "recursive"
    in_channels: int = 3

    def __post_init__(self):
        if len(self.widths) != 5:
            raise ConfigurationError(f"widths must list 5 levels, got {list(self.widths)}")
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])) or self.widths[0] < 1:
            raise ConfigurationError(f"widths must be positive and strictly increasing, got {list(self.widths)}")
        if self.miwg_mode not in MIWG_MODES:
            raise ConfigurationError(f"miwg_mode must be one of {MIWG_MODES}, got {self.miwg_mode!r}")
        if self.num_modalities < 1:
            raise ConfigurationError("num_modalities must be >= 1")


@dataclass
class TrainConfig:
    lr: float = 2e-3
    weight_decay: float = 5e-4
    momentum: float = 0.9
    lr_decay: float = 0.8
    decay_every: int = 20
    epochs: int = 200
    batch_size: int = 8
    image_size: int = 64
    seed: int = 0
    widths: tuple[int, ...] = (16, 32, 64, 128, 256)
    miwg_mode: str = "recursive"
    checkpoint_every: int = 0  # epochs; 0 keeps only the final checkpoint
    augment: bool = True
    input_types: tuple[str, ...] = ("RGB", "D", "T", "RGB-D", "RGB-T", "D-T", "RGB-D-T")
    prefetch: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be > 0, got {self.lr}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.batch_size < 1 or self.epochs < 0 or self.decay_every < 1:
            raise ConfigurationError("batch_size and decay_every must be >= 1, epochs >= 0")
        if self.image_size % 32:
            raise ConfigurationError(f"image_size must be divisible by 32, got {self.image_size}")
        for t in self.input_types:
            parse_setting(t)
        self.model_config()

    def model_config(self) -> ModelConfig:
        return ModelConfig(widths=tuple(self.widths), miwg_mode=self.miwg_mode)


def _coerce(name: str, raw: str, default):
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(int(p) for p in parts) if default and isinstance(default[0], int) else tuple(parts)
        return raw
    except ValueError:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from None


def apply_overrides(cfg: TrainConfig, pairs: dict[str, str]) -> TrainConfig:
    known = {f.name: f for f in dataclasses.fields(cfg)}
    updates = {}
    for key, raw in pairs.items():
        if key not in known:
            raise ConfigurationError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, raw, getattr(cfg, key))
    return dataclasses.replace(cfg, **updates)


def parse_pairs(lines, source: str = "<config>") -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path=None, overrides: dict[str, str] | None = None) -> TrainConfig:
    cfg = TrainConfig()
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        cfg = apply_overrides(cfg, parse_pairs(text.splitlines(), str(path)))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def dump_config(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = str(v).lower()
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"
