"""Homogeneous-type batch sampling.

Each step first picks one input type (a modality subset such as ``RGB-T``)
and then fills the batch with records that carry all of its modalities, so
every batch has a single modality set.
"""
from __future__ import annotations

import queue
import threading
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ..errors import ConfigurationError
from ..modality import all_settings, indicator, parse_setting, setting_name
from .loading import load_sample
from .manifest import Manifest


@dataclass
class ModalBatch:
    modalities: tuple[str, ...]
    images: dict[str, np.ndarray]    # modality -> [B,3,h,w]
    gt: np.ndarray                   # [B,1,h,w]
    record_ids: list[str]

    @property
    def input_type(self) -> str:
        return setting_name(self.modalities)

    @property
    def indicators(self):
        return {m: indicator(m) for m in self.modalities}

    @property
    def labels(self) -> dict[str, list[str]]:
        return {m: [m] * len(self.record_ids) for m in self.modalities}


class BatchSampler:
    """Draws (input type, record indices) pairs; see :func:`batch_sampler`."""

    def __init__(self, manifest: Manifest, batch_size: int, rng: np.random.Generator,
                 input_types: Sequence[str] = (),
                 weights: Sequence[float] | None = None):
        if len(manifest) == 0:
            raise ConfigurationError("cannot sample batches from an empty manifest")
        if batch_size < 1:
            raise ConfigurationError(f"batch size must be >= 1, got {batch_size}")
        self.manifest = manifest
        self.batch_size = batch_size
        self.rng = rng
        types = [parse_setting(t) for t in input_types] if input_types else all_settings()
        self.eligible = {}
        for t in types:
            idx = [i for i, r in enumerate(manifest.records) if r.has(t)]
            if idx:
                self.eligible[t] = np.array(idx)
        if not self.eligible:
            raise ConfigurationError("no record carries any of the requested input types")
        self.types = list(self.eligible)
        if weights is None:
            w = np.array([len(self.eligible[t]) for t in self.types], dtype=np.float64)
        else:
            if len(weights) != len(input_types):
                raise ConfigurationError("one weight per input type is required")
            w = np.array([weights[[parse_setting(t) for t in input_types].index(t)] for t in self.types])
        self.probs = w / w.sum()

    def draw(self) -> tuple[tuple[str, ...], list[int]]:
        t = self.types[int(self.rng.choice(len(self.types), p=self.probs))]
        pool = self.eligible[t]
        replace = len(pool) < self.batch_size
        picked = self.rng.choice(pool, size=self.batch_size, replace=replace)
        return t, [int(i) for i in picked]


def assemble(manifest: Manifest, mods: tuple[str, ...], indices: Sequence[int], size: int,
             augment: bool, rng: np.random.Generator) -> ModalBatch:
    samples = [load_sample(manifest.records[i], size, augment, rng, modalities=mods) for i in indices]
    images = {m: np.stack([s.images[m] for s in samples]) for m in mods}
    return ModalBatch(mods, images, np.stack([s.gt for s in samples]), [s.record_id for s in samples])


def batch_sampler(manifest: Manifest, batch_size: int, rng: np.random.Generator, size: int = 64,
                  augment: bool = False, input_types: Sequence[str] | None = None,
                  weights: Sequence[float] | None = None, steps: int | None = None,
                  prefetch: int = 0) -> Iterator[ModalBatch]:
    """Stream of single-type batches; endless unless ``steps`` is given.

    Type probabilities default to the number of records carrying each type.
    ``prefetch > 0`` loads on a background thread through a bounded queue;
    the same RNG drives both modes, so the stream is identical.
    """
    sampler = BatchSampler(manifest, batch_size, rng, input_types or (), weights)

    def produce():
        n = 0
        while steps is None or n < steps:
            mods, idx = sampler.draw()
            yield assemble(manifest, mods, idx, size, augment, rng)
            n += 1

    if prefetch <= 0:
        yield from produce()
        return
    q: queue.Queue = queue.Queue(maxsize=prefetch)
    done = object()
    stop = threading.Event()

    def worker():
        try:
            for batch in produce():
                if stop.is_set():
                    return
                q.put(batch)
            q.put(done)
        except BaseException as exc:  # surfaced in the consumer
            q.put(exc)

    thread = threading.Thread(target=worker, daemon=True)
    thread.start()
    try:
        while True:
            item = q.get()
            if item is done:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
