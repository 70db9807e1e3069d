"""Saliency for one scene given as image files of any modality subset."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from . import tensor as T
from .data.loading import normalize, read_image, resize, to_three_channels
from .errors import ConfigurationError, DataError
from .modality import canonical
from .model import MSN


def working_size(h: int, w: int) -> tuple[int, int]:
    """Nearest multiples of 32 (at least 32) to the input size."""
    return tuple(max(32, int(round(v / 32)) * 32) for v in (h, w))


def parse_input(spec: str) -> tuple[str, str]:
    """``"scene.png:rgb"`` -> ``("RGB", "scene.png")``."""
    path, sep, mod = spec.rpartition(":")
    if not sep or not path:
        raise ConfigurationError(f"input {spec!r} must be given as path:modality")
    return canonical(mod), path


def saliency_for_files(model: MSN, files: Mapping[str, str]) -> np.ndarray:
    """Final saliency map in [0,1] at the resolution of the input images."""
    raw = {m: read_image(p) for m, p in files.items()}
    shapes = {arr.shape[:2] for arr in raw.values()}
    if len(shapes) != 1:
        raise DataError(f"input images differ in size: {sorted(shapes)}")
    h, w = shapes.pop()
    size = working_size(h, w)
    inputs = {}
    for m, arr in raw.items():
        img = resize(to_three_channels(arr).astype(np.float32) / 255.0, size)
        inputs[m] = T.Tensor(normalize(img)[None])
    pred = model.predict(inputs)[0]
    return np.clip(resize(pred.astype(np.float32), (h, w)), 0.0, 1.0)
