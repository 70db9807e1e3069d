"""Training objective: multi-level saliency cross-entropy plus modality loss."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import DataError, DimensionError
from .tensor import Tensor

CLAMP = 1e-7


def check_binary(y: np.ndarray, source: str = "ground truth"):
    if not np.all((y == 0) | (y == 1)):
        raise DataError(f"{source}: ground truth must be binary (0/1)")


def bce(s: Tensor, y: Tensor) -> Tensor:
    """Mean over pixels of ``-[y log s + (1-y) log(1-s)]``."""
    if s.shape != y.shape:
        raise DimensionError(f"bce: prediction {s.shape} vs target {y.shape}")
    s = T.clamp(s, CLAMP, 1.0 - CLAMP)
    per_pixel = y * T.log(s) + (1.0 - y) * T.log(1.0 - s)
    return T.mean_all(per_pixel) * -1.0


def saliency_loss(maps: Sequence[Tensor], gt: Tensor, source: str = "ground truth") -> Tensor:
    """Sum over the four levels of the pixel-mean binary cross-entropy.

    Each map is bilinearly upsampled to the ground-truth resolution first.
    ``gt`` is [B,1,H,W] (or [1,H,W] for a single sample).
    """
    check_binary(gt.data, source)
    if gt.data.ndim == 3:
        gt = T.reshape(gt, (1,) + gt.shape)
    h, w = gt.shape[2:]
    total = None
    for s in maps:
        if s.data.ndim == 3:
            s = T.reshape(s, (1,) + s.shape)
        if s.shape[2:] != (h, w):
            s = T.bilinear_upsample(s, h, w)
        term = bce(s, gt)
        total = term if total is None else total + term
    return total


def total_loss(l_ce: Tensor, l_modality: Tensor) -> Tensor:
    return l_ce + l_modality
