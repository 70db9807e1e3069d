"""Modality switch feature extractor.

One backbone serves every modality. At each of the five levels a small
projection turns (context, pooled features) into per-channel sigmoid gates,
so the same weights extract modality-specific features depending on the
one-hot indicator fed in at level 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import ConfigurationError, DimensionError
from .modality import MODALITIES, ModalityIndicator
from .params import NetworkParams, add_conv, add_linear, ones, zeros
from .tensor import Tensor

LEVELS = 5
CE_CLAMP = 1e-7
# Gate projections start with the context columns scaled up so the
# indicator, not image statistics, dominates the gates from the first step.
CONTEXT_GAIN = 8.0


@dataclass
class UnimodalFeatures:
    features: list[Tensor]  # F^1..F^5, gated
    weights: list[Tensor]   # w^1..w^5, each [B, C_i] in (0, 1)
    modality_ids: list[str]


def stage_prefix(level: int) -> str:
    return f"msfe.stage{level}"


def init_msfe(params: NetworkParams, rng: np.random.Generator, cfg: ModelConfig,
              context_gain: float = CONTEXT_GAIN):
    widths = cfg.widths
    c_prev = cfg.in_channels
    for i, c in enumerate(widths, start=1):
        p = stage_prefix(i)
        add_conv(params, f"{p}.down", rng, c_prev, c, 3)
        params[f"{p}.scale"] = ones((c,))
        params[f"{p}.shift"] = zeros((c,))
        add_conv(params, f"{p}.res_a", rng, c, c, 3)
        add_conv(params, f"{p}.res_b", rng, c, c, 3)
        # residual branch starts small so the stack is near-identity at init
        params[f"{p}.res_b.weight"].data *= 0.1
        context = cfg.num_modalities if (i == 1 or cfg.miwg_mode == "indicator") else widths[i - 2]
        add_linear(params, f"msfe.miwg{i}", rng, context + c, c)
        params[f"msfe.miwg{i}.weight"].data[:context] *= context_gain
        c_prev = c
    add_linear(params, "msfe.classifier", rng, widths[-1], cfg.num_modalities)


def backbone_stage(x: Tensor, params: NetworkParams, level: int) -> Tensor:
    """Stride-2 downsampling conv, per-channel scale/shift, then a residual pair of 3x3 convs."""
    p = stage_prefix(level)
    y = T.conv2d(x, params[f"{p}.down.weight"], params[f"{p}.down.bias"], stride=2, padding=1)
    y = T.relu(T.channel_affine(y, params[f"{p}.scale"], params[f"{p}.shift"]))
    z = T.relu(T.conv2d(y, params[f"{p}.res_a.weight"], params[f"{p}.res_a.bias"], 1, 1))
    z = T.conv2d(z, params[f"{p}.res_b.weight"], params[f"{p}.res_b.bias"], 1, 1)
    return T.relu(y + z)


def miwg(context: Tensor, gap_feat: Tensor, params: NetworkParams, level: int) -> Tensor:
    """Per-channel gate ``sigmoid(Linear(Cat(context, gap_feat)))``."""
    weight = params[f"msfe.miwg{level}.weight"]
    expected = weight.shape[0] - gap_feat.shape[1]
    if context.shape[1] != expected:
        raise ConfigurationError(
            f"level {level} gate expects a context of length {expected}, got {context.shape[1]}")
    joined = T.concat([context, gap_feat], axis=1)
    return T.sigmoid(T.linear(joined, weight, params[f"msfe.miwg{level}.bias"]))


def _indicator_matrix(indicators, batch: int, k: int) -> tuple[np.ndarray, list[str]]:
    if isinstance(indicators, ModalityIndicator):
        indicators = [indicators] * batch
    indicators = list(indicators)
    if len(indicators) != batch:
        raise DimensionError(f"{len(indicators)} indicators for a batch of {batch}")
    for ind in indicators:
        if ind.num_modalities != k:
            raise ConfigurationError(f"indicator length {ind.num_modalities} != modality universe size {k}")
    return np.stack([ind.vector for ind in indicators]), [ind.modality_id for ind in indicators]


def extract(images: Tensor, indicators: ModalityIndicator | Sequence[ModalityIndicator],
            params: NetworkParams, miwg_mode: str = "recursive",
            gate_override: float | None = None) -> UnimodalFeatures:
    """Five levels of gated features from ``images`` [B,3,H,W].

    ``indicators`` is one indicator for the whole batch or one per item.
    ``gate_override`` replaces every gate with a constant (testing hook).
    """
    if images.data.ndim != 4:
        raise DimensionError(f"extract expects [B,C,H,W] images, got {images.shape}")
    k = params["msfe.classifier.weight"].shape[1]
    mids, ids = _indicator_matrix(indicators, images.shape[0], k)
    mid = Tensor(mids.astype(images.dtype))
    features, weights = [], []
    x, context = images, mid
    for level in range(1, LEVELS + 1):
        raw = backbone_stage(x, params, level)
        if gate_override is not None:
            w = Tensor(np.full(raw.shape[:2], gate_override, dtype=raw.dtype))
        else:
            w = miwg(context, T.global_avg_pool(raw), params, level)
        x = T.channel_mul(raw, w)
        features.append(x)
        weights.append(w)
        context = w if miwg_mode == "recursive" else mid
    return UnimodalFeatures(features, weights, ids)


def classify_modality(f5: Tensor, params: NetworkParams) -> Tensor:
    """Softmax probabilities [B,K] over modalities from level-5 features."""
    logits = T.linear(T.global_avg_pool(f5), params["msfe.classifier.weight"], params["msfe.classifier.bias"])
    return T.softmax_rows(logits)


def modality_loss(probs: Tensor, labels: Sequence[str | int]) -> Tensor:
    """Mean cross-entropy of ``probs`` against modality labels."""
    b, k = probs.shape
    if len(labels) != b:
        raise DimensionError(f"{len(labels)} labels for {b} predictions")
    onehot = np.zeros((b, k), dtype=probs.dtype)
    for row, lab in enumerate(labels):
        idx = MODALITIES.index(lab) if isinstance(lab, str) else int(lab)
        onehot[row, idx] = 1.0
    logp = T.log(T.clamp(probs, CE_CLAMP, 1.0 - CE_CLAMP))
    return T.sum_all(logp * Tensor(onehot)) * (-1.0 / b)


def backbone_numel(params: NetworkParams) -> int:
    return params.numel("msfe.stage")


def msfe_numel(params: NetworkParams) -> int:
    return params.numel("msfe.")
