"""Coarse-to-fine saliency decoder.

A 1x1 seed block lifts the deepest fused level; four merge blocks then walk
up the pyramid, each concatenating the fused features of its level with the
bilinearly upsampled output of the level below and applying a 3x3 conv. A
1x1 head with a sigmoid on each merge output gives S^1..S^4.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import DimensionError
from .params import NetworkParams, add_conv
from .tensor import Tensor


def init_decoder(params: NetworkParams, rng: np.random.Generator, cfg: ModelConfig):
    widths = cfg.widths
    add_conv(params, "decoder.seed", rng, widths[4], widths[4], 1)
    for i in range(4, 0, -1):
        add_conv(params, f"decoder.merge{i}", rng, widths[i - 1] + widths[i], widths[i - 1], 3)
    for i in range(1, 5):
        add_conv(params, f"decoder.head{i}", rng, widths[i - 1], 1, 1)


def _conv(x, params, name, padding=0):
    return T.conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"], 1, padding)


def _check_pyramid(fused: Sequence[Tensor]):
    if len(fused) != 5:
        raise DimensionError(f"decoder expects 5 fused levels, got {len(fused)}")
    for lo, hi in zip(fused, fused[1:]):
        if lo.shape[0] != hi.shape[0] or any(
                a < b or a > 2 * b for a, b in zip(lo.shape[2:], hi.shape[2:])):
            raise DimensionError(f"inconsistent pyramid: level shapes {lo.shape} above {hi.shape}")


def decode_features(fused: Sequence[Tensor], params: NetworkParams) -> list[Tensor]:
    """Decoder outputs F_do^1..F_do^5 (index 0 is level 1)."""
    _check_pyramid(fused)
    outs = [None] * 5
    outs[4] = T.relu(_conv(fused[4], params, "decoder.seed"))
    for i in range(4, 0, -1):
        target = fused[i - 1]
        up = T.bilinear_upsample(outs[i], target.shape[2], target.shape[3])
        outs[i - 1] = T.relu(_conv(T.concat([target, up], axis=1), params, f"decoder.merge{i}", padding=1))
    return outs


def decode(fused: Sequence[Tensor], params: NetworkParams) -> list[Tensor]:
    """Saliency maps S^1..S^4, each [B,1,h_i,w_i] with values in (0, 1)."""
    outs = decode_features(fused, params)
    return [T.sigmoid(_conv(outs[i - 1], params, f"decoder.head{i}")) for i in range(1, 5)]


def decoder_numel(params: NetworkParams) -> int:
    return params.numel("decoder.")
