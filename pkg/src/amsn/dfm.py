"""Dynamic fusion over a variable number of modalities.

For N inputs the features are stacked on a new modality axis, projected to
keys, queries and values by shared 1x1 convs, and every channel gets its own
N x N attention matrix ``softmax(K_c Q_c^T / sqrt(N))`` that mixes the value
slices. Averaging over the modality axis makes the output independent of
input order and keeps its scale comparable across arities. A single input
reduces to the value projection alone.

The divisor is sqrt(N), the modality count, not sqrt(H*W). The query
projection has no bias: a query offset only adds a per-row constant to the
scores, which the softmax cancels, so such a bias would never train.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import ConfigurationError, DimensionError
from .params import NetworkParams, add_conv
from .tensor import Tensor


def init_dfm(params: NetworkParams, rng: np.random.Generator, cfg: ModelConfig):
    for i, c in enumerate(cfg.widths, start=1):
        for proj in ("key", "query", "value"):
            add_conv(params, f"dfm.level{i}.{proj}", rng, c, c, 1)
        del params[f"dfm.level{i}.query.bias"]


def _project(x: Tensor, params: NetworkParams, level: int, proj: str) -> Tensor:
    p = f"dfm.level{level}.{proj}"
    weight = params[f"{p}.weight"]
    bias = params[f"{p}.bias"] if f"{p}.bias" in params else T.Tensor(np.zeros(weight.shape[0], weight.dtype))
    return T.conv2d(x, weight, bias)


def _attend(keys: Tensor, queries: Tensor, values: Tensor) -> Tensor:
    # [B,C,N,HW] layout; one N x N matrix per (batch item, channel)
    n = keys.shape[2]
    scores = T.matmul(keys, T.permute(queries, (0, 1, 3, 2))) * (1.0 / math.sqrt(n))
    return T.matmul(T.softmax_rows(scores), values)


def _heads(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    return T.permute(T.reshape(x, (1, n, c, h * w)), (0, 2, 1, 3))


def channel_attention(keys: Tensor, queries: Tensor, values: Tensor) -> Tensor:
    """Mix the N modality slices of ``values`` channel by channel.

    All three inputs are [N,C,H,W]; so is the result.
    """
    n, c, h, w = values.shape
    for x in (keys, queries):
        if x.shape != values.shape:
            raise DimensionError(f"channel_attention: {x.shape} vs {values.shape}")
    mixed = _attend(_heads(keys), _heads(queries), _heads(values))
    return T.reshape(T.permute(mixed, (0, 2, 1, 3)), (n, c, h, w))


def attention_weights(keys: Tensor, queries: Tensor) -> Tensor:
    """The [C,N,N] row-stochastic matrices for [N,C,H,W] keys and queries."""
    n = keys.shape[0]
    k, q = _heads(keys), _heads(queries)
    scores = T.matmul(k, T.permute(q, (0, 1, 3, 2))) * (1.0 / math.sqrt(n))
    return T.reshape(T.softmax_rows(scores), (keys.shape[1], n, n))


def fuse(features: Sequence[Tensor], params: NetworkParams, level: int,
         max_modalities: int | None = None, general: bool = False) -> Tensor:
    """Fuse N same-shaped [B,C,H,W] feature maps into one [B,C,H,W] map.

    ``general=True`` runs the attention path even for N = 1 (used to check
    that it reduces to the value projection).
    """
    features = list(features)
    n = len(features)
    if n == 0:
        raise DimensionError("fuse needs at least one modality")
    if max_modalities is not None and n > max_modalities:
        raise ConfigurationError(f"{n} modalities exceed the universe size {max_modalities}")
    shape = features[0].shape
    for f in features[1:]:
        if f.shape != shape:
            raise DimensionError(f"fuse: modality features disagree in shape, {shape} vs {f.shape}")
    if len(shape) != 4:
        raise DimensionError(f"fuse expects [B,C,H,W] features, got {shape}")
    if n == 1 and not general:
        return _project(features[0], params, level, "value")

    b, c, h, w = shape
    stacked = T.reshape(T.stack(features, axis=0), (n * b, c, h, w))

    def to_heads(x):
        # [N*B,C,H,W] -> [B,C,N,HW]
        return T.permute(T.reshape(x, (n, b, c, h * w)), (1, 2, 0, 3))

    keys = to_heads(_project(stacked, params, level, "key"))
    queries = to_heads(_project(stacked, params, level, "query"))
    values = to_heads(_project(stacked, params, level, "value"))
    enhanced = _attend(keys, queries, values)
    return T.reshape(T.mean_axis(enhanced, 2), (b, c, h, w))


def fusion_numel(params: NetworkParams) -> int:
    return params.numel("dfm.")
