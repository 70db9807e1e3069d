"""Named parameter collection and Kaiming-style initialisation."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import Tensor, get_dtype


class NetworkParams:
    """Ordered ``name -> Tensor`` mapping; one entry per trainable array."""

    def __init__(self, tensors: dict[str, Tensor] | None = None):
        self._tensors: dict[str, Tensor] = {}
        for name, t in (tensors or {}).items():
            self[name] = t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __setitem__(self, name: str, t: Tensor):
        t.name = name
        t.requires_grad = True
        self._tensors[name] = t

    def __delitem__(self, name: str):
        del self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._tensors if n.startswith(prefix)]

    def numel(self, prefix: str = "") -> int:
        return sum(t.size for n, t in self._tensors.items() if n.startswith(prefix))

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._tensors.items()}

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams({n: Tensor(t.data.astype(dtype)) for n, t in self._tensors.items()})


def kaiming(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    std = math.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=shape).astype(get_dtype()))


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=get_dtype()))


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape, dtype=get_dtype()))


def add_conv(params: NetworkParams, name: str, rng, c_in: int, c_out: int, k: int):
    params[f"{name}.weight"] = kaiming(rng, (c_out, c_in, k, k), c_in * k * k)
    params[f"{name}.bias"] = zeros((c_out,))


def add_linear(params: NetworkParams, name: str, rng, n_in: int, n_out: int):
    params[f"{name}.weight"] = kaiming(rng, (n_in, n_out), n_in)
    params[f"{name}.bias"] = zeros((n_out,))
