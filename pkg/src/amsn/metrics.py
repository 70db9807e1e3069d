"""MAE and adaptive-threshold F-measure, aggregated into evaluation reports."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DimensionError, EvaluationError

OMEGA2 = 0.3


def mae(s: np.ndarray, y: np.ndarray) -> float:
    s, y = np.asarray(s, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if s.shape != y.shape:
        raise DimensionError(f"mae: prediction {s.shape} vs ground truth {y.shape}")
    return float(np.abs(s - y).mean())


def f_beta_from_pr(precision: float, recall: float, omega2: float = OMEGA2) -> float:
    denom = omega2 * precision + recall
    if denom <= 0:
        return 0.0
    return (1 + omega2) * precision * recall / denom


def adaptive_threshold(s: np.ndarray) -> float:
    return min(2.0 * float(np.mean(s)), 1.0)


def precision_recall(s: np.ndarray, y: np.ndarray, threshold: float | None = None) -> tuple[float, float]:
    s, y = np.asarray(s, dtype=np.float64), np.asarray(y) > 0.5
    if s.shape != y.shape:
        raise DimensionError(f"f_beta: prediction {s.shape} vs ground truth {y.shape}")
    tau = adaptive_threshold(s) if threshold is None else threshold
    pred = s >= tau
    tp = np.count_nonzero(pred & y)
    n_pred, n_pos = np.count_nonzero(pred), np.count_nonzero(y)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_pos if n_pos else 0.0
    return precision, recall


def f_beta(s: np.ndarray, y: np.ndarray, omega2: float = OMEGA2, threshold: float | None = None) -> float:
    """F-measure of ``s`` binarised at ``min(2 * mean(s), 1)`` unless a threshold is given.

    Empty predictions or empty ground truth score 0.
    """
    p, r = precision_recall(s, y, threshold)
    if p == 0.0 or r == 0.0:
        return 0.0
    return f_beta_from_pr(p, r, omega2)


# ---------------------------------------------------------------- reports

SOLE_SETTINGS = ("RGB", "D", "T", "RGB-D", "RGB-T", "D-T", "RGB-D-T")
REPORT_HEADER = "setting,count,MAE,Fbeta"


@dataclass
class SettingScore:
    count: int
    mae: float | None
    fbeta: float | None


@dataclass
class EvalReport:
    mode: str
    rows: dict[str, SettingScore] = field(default_factory=dict)

    def to_table(self) -> str:
        buf = io.StringIO()
        buf.write(REPORT_HEADER + "\n")
        for name, row in self.rows.items():
            if row.count == 0:
                continue
            buf.write(f"{name},{row.count},{row.mae:.6f},{row.fbeta:.6f}\n")
        return buf.getvalue()

    def count(self, setting: str) -> int:
        row = self.rows.get(setting)
        return row.count if row else 0


def evaluate(predictions: Mapping[tuple[str, str], np.ndarray], ground_truths: Mapping[str, np.ndarray],
             plan: Mapping[str, list[str]], mode: str = "sole", omega2: float = OMEGA2) -> EvalReport:
    """Average per-image MAE and F-measure for every setting in ``plan``.

    ``plan`` maps setting name -> record ids evaluated under it (see
    :func:`amsn.data.manifest.expand_modes`); ``predictions`` is keyed by
    ``(record_id, setting)``. In joint mode an ``ALL`` row pools every
    evaluated pair.
    """
    report = EvalReport(mode)
    pooled_mae, pooled_f = [], []
    for setting, ids in plan.items():
        maes, fs = [], []
        for rid in ids:
            key = (rid, setting)
            if key not in predictions:
                raise EvaluationError(f"missing prediction for record {rid} under setting {setting}")
            if rid not in ground_truths:
                raise EvaluationError(f"missing ground truth for record {rid}")
            s, y = predictions[key], ground_truths[rid]
            maes.append(mae(s, y))
            fs.append(f_beta(s, y, omega2))
        if maes:
            report.rows[setting] = SettingScore(len(maes), float(np.mean(maes)), float(np.mean(fs)))
        else:
            report.rows[setting] = SettingScore(0, None, None)
        pooled_mae += maes
        pooled_f += fs
    if mode == "joint":
        report.rows["ALL"] = (SettingScore(len(pooled_mae), float(np.mean(pooled_mae)), float(np.mean(pooled_f)))
                              if pooled_mae else SettingScore(0, None, None))
    return report
