"""Optimisation loop: SGD with Nesterov momentum and step-decayed learning rate."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import checkpoint
from .config import TrainConfig, dump_config
from .data.manifest import Manifest
from .data.sampler import ModalBatch, batch_sampler
from .errors import ContractError, NumericError
from .model import MSN
from .params import NetworkParams
from .tensor import Tensor

log = logging.getLogger(__name__)

LOG_HEADER = "step,type,l_ce,l_modality,l_total,lr"


@dataclass
class OptimizerState:
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    lr: float = 0.0


def decays(name: str) -> bool:
    """Weight decay applies to conv and linear weights, never biases or scale/shift."""
    return name.endswith(".weight")


def sgd_nesterov_step(params: NetworkParams, state: OptimizerState, lr: float,
                      momentum: float = 0.9, weight_decay: float = 0.0):
    """In-place update ``p -= lr * (g + mu * v)`` with ``v = mu * v + g``.

    ``g`` is the gradient plus ``weight_decay * p`` for decayed parameters.
    Parameters without a gradient are treated as having a zero gradient.
    """
    for name, p in params.items():
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        if grad.shape != p.shape:
            raise ContractError(f"gradient for {name} has shape {grad.shape}, parameter {p.shape}")
        g = grad + weight_decay * p.data if (weight_decay and decays(name)) else grad
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        elif v.shape != p.shape:
            raise ContractError(f"velocity for {name} has shape {v.shape}, parameter {p.shape}")
        v = momentum * v + g
        state.velocity[name] = v.astype(p.dtype, copy=False)
        p.data = (p.data - lr * (g + momentum * v)).astype(p.dtype, copy=False)
    state.lr = lr


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_every)


@dataclass
class StepRecord:
    step: int
    input_type: str
    l_ce: float
    l_modality: float
    l_total: float
    lr: float

    def csv(self) -> str:
        return f"{self.step},{self.input_type},{self.l_ce:.8g},{self.l_modality:.8g},{self.l_total:.8g},{self.lr:.8g}"


@dataclass
class TrainResult:
    model: MSN
    history: list[StepRecord]
    checkpoints: list[Path]


def batch_inputs(batch: ModalBatch) -> dict[str, Tensor]:
    return {m: Tensor(batch.images[m]) for m in batch.modalities}


def train_step(model: MSN, batch: ModalBatch, state: OptimizerState, cfg: TrainConfig, lr: float):
    model.params.zero_grad()
    out = model.forward(batch_inputs(batch))
    terms = model.losses(out, Tensor(batch.gt))
    total = terms.l_total.item()
    if not math.isfinite(total):
        raise NumericError(f"non-finite loss {total} on batch [{', '.join(batch.record_ids)}]")
    terms.l_total.backward()
    sgd_nesterov_step(model.params, state, lr, cfg.momentum, cfg.weight_decay)
    return terms


def train(cfg: TrainConfig, manifest: Manifest, out_dir=None, model: MSN | None = None,
          on_step: Callable[[StepRecord], None] | None = None) -> TrainResult:
    """Train one network on every input type in ``manifest``.

    Writes ``loss_log.csv``, ``config.txt`` and ``final.ckpt`` (plus
    ``epoch_XXXX.ckpt`` every ``checkpoint_every`` epochs) when ``out_dir``
    is given.
    """
    if len(manifest) == 0:
        raise ContractError("cannot train on an empty manifest")
    model = model or MSN.initialize(cfg.model_config(), seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    steps_per_epoch = math.ceil(len(manifest) / cfg.batch_size)
    batches = batch_sampler(manifest, cfg.batch_size, rng, size=cfg.image_size, augment=cfg.augment,
                            input_types=cfg.input_types, steps=steps_per_epoch * cfg.epochs,
                            prefetch=2 if cfg.prefetch else 0)
    out = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
        log_file = open(out / "loss_log.csv", "w", encoding="utf-8")
        log_file.write(LOG_HEADER + "\n")
    state = OptimizerState()
    history, saved = [], []
    step = 0
    try:
        for epoch in range(cfg.epochs):
            state.epoch = epoch
            lr = lr_schedule(epoch, cfg)
            for _ in range(steps_per_epoch):
                batch = next(batches)
                terms = train_step(model, batch, state, cfg, lr)
                rec = StepRecord(step, batch.input_type, terms.l_ce.item(), terms.l_modality.item(),
                                 terms.l_total.item(), lr)
                history.append(rec)
                if log_file:
                    log_file.write(rec.csv() + "\n")
                if on_step:
                    on_step(rec)
                step += 1
            if out is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                path = out / f"epoch_{epoch + 1:04d}.ckpt"
                checkpoint.save(path, model.state())
                saved.append(path)
            if epoch % 10 == 0 or epoch == cfg.epochs - 1:
                log.info("epoch %d lr %.3g last loss %.4f", epoch, lr, history[-1].l_total if history else float("nan"))
    finally:
        if log_file:
            log_file.close()
        batches.close()
    if out is not None:
        path = out / "final.ckpt"
        checkpoint.save(path, model.state())
        saved.append(path)
    return TrainResult(model, history, saved)
