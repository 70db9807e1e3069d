"""Modality universe, one-hot indicators and modality-set names."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigurationError

MODALITIES = ("RGB", "D", "T")
_ALIASES = {"rgb": "RGB", "d": "D", "depth": "D", "t": "T", "thermal": "T"}


def canonical(name: str) -> str:
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise ConfigurationError(f"unknown modality {name!r}; expected one of rgb, depth, thermal") from None


def sort_modalities(mods) -> tuple[str, ...]:
    mods = [canonical(m) for m in mods]
    if len(set(mods)) != len(mods):
        raise ConfigurationError(f"duplicate modality in {mods}")
    return tuple(sorted(mods, key=MODALITIES.index))


def setting_name(mods) -> str:
    """``("RGB", "T")`` -> ``"RGB-T"``, in canonical order."""
    return "-".join(sort_modalities(mods))


def parse_setting(name: str) -> tuple[str, ...]:
    return sort_modalities(name.split("-"))


def all_settings() -> list[tuple[str, ...]]:
    """Every nonempty subset, singles first: RGB, D, T, RGB-D, RGB-T, D-T, RGB-D-T."""
    return [c for n in range(1, len(MODALITIES) + 1) for c in combinations(MODALITIES, n)]


@dataclass(frozen=True)
class ModalityIndicator:
    modality_id: str
    num_modalities: int = len(MODALITIES)

    @property
    def index(self) -> int:
        return MODALITIES.index(self.modality_id)

    @property
    def vector(self) -> np.ndarray:
        v = np.zeros(self.num_modalities, dtype=np.float64)
        v[self.index] = 1.0
        return v


def indicator(modality: str, num_modalities: int = len(MODALITIES)) -> ModalityIndicator:
    mod = canonical(modality)
    if MODALITIES.index(mod) >= num_modalities:
        raise ConfigurationError(f"modality {mod} outside a universe of size {num_modalities}")
    return ModalityIndicator(mod, num_modalities)
