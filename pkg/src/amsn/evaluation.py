"""Run a trained network over manifest settings and score it."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from . import tensor as T
from .data.loading import load_gt, load_sample
from .data.manifest import Manifest, expand_modes
from .metrics import EvalReport, evaluate
from .modality import MODALITIES, parse_setting
from .model import MSN
from .msfe import classify_modality


def predict_plan(model: MSN, manifest: Manifest, plan: dict[str, list[str]], size: int,
                 batch_size: int = 16) -> dict[tuple[str, str], np.ndarray]:
    """Saliency map per ``(record id, setting)``, feeding only that setting's modalities."""
    records = manifest.by_id()
    preds = {}
    for setting, ids in plan.items():
        mods = parse_setting(setting)
        for start in range(0, len(ids), batch_size):
            chunk = ids[start:start + batch_size]
            samples = [load_sample(records[rid], size, modalities=mods) for rid in chunk]
            inputs = {m: T.Tensor(np.stack([s.images[m] for s in samples])) for m in mods}
            maps = model.predict(inputs)
            for rid, s in zip(chunk, maps):
                preds[(rid, setting)] = s
    return preds


def evaluate_model(model: MSN, manifest: Manifest, mode: str = "sole", size: int = 64) -> EvalReport:
    plan = expand_modes(manifest).plan(mode)
    preds = predict_plan(model, manifest, plan, size)
    records = manifest.by_id()
    needed = {rid for ids in plan.values() for rid in ids}
    gts = {rid: load_gt(records[rid], size) for rid in needed}
    return evaluate(preds, gts, plan, mode)


def modality_accuracy(model: MSN, manifest: Manifest, size: int = 64, batch_size: int = 32) -> tuple[float, int]:
    """Argmax accuracy of the modality classifier over every image in ``manifest``."""
    correct = total = 0
    records = manifest.by_id()
    for m, rids in _images_by_modality(manifest):
        for start in range(0, len(rids), batch_size):
            chunk = rids[start:start + batch_size]
            x = T.Tensor(np.stack([load_sample(records[r], size, modalities=[m]).images[m] for r in chunk]))
            with T.no_grad():
                out = model.forward({m: x})
                probs = classify_modality(out.unimodal[m].features[-1], model.params).data
            correct += int(np.sum(probs.argmax(axis=1) == MODALITIES.index(m)))
            total += len(chunk)
    return (correct / total if total else 0.0), total


def _images_by_modality(manifest: Manifest) -> Iterable[tuple[str, list[str]]]:
    for m in MODALITIES:
        rids = [r.id for r in manifest if m in r.modalities]
        if rids:
            yield m, rids


def embedding_rows(model: MSN, manifest: Manifest, size: int = 64) -> list[tuple[str, str, np.ndarray]]:
    """(record id, modality, pooled level-5 feature vector) for every image."""
    rows = []
    records = manifest.by_id()
    for m, rids in _images_by_modality(manifest):
        for rid in rids:
            x = T.Tensor(load_sample(records[rid], size, modalities=[m]).images[m][None])
            emb = model.level5_embeddings({m: x})[m][0]
            rows.append((rid, m, emb))
    return rows
