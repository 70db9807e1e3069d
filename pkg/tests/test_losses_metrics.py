import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amsn import tensor as T
from amsn.data.manifest import Manifest, SampleRecord, expand_modes
from amsn.errors import DataError, DimensionError, EvaluationError
from amsn.losses import bce, saliency_loss, total_loss
from amsn.metrics import adaptive_threshold, evaluate, f_beta, f_beta_from_pr, mae, precision_recall


def blob(size=32, r=8):
    yy, xx = np.mgrid[:size, :size]
    return ((yy - size / 2) ** 2 + (xx - size / 2) ** 2 < r * r).astype(np.float64)


def test_fbeta_perfect_prediction_is_one():
    y = blob()
    assert f_beta(y, y) == 1.0


def test_fbeta_from_precision_recall():
    assert f_beta_from_pr(0.8, 0.5) == pytest.approx(0.7027, abs=1e-4)
    assert f_beta_from_pr(0.8, 0.5) == pytest.approx(1.3 * 0.4 / (0.3 * 0.8 + 0.5), rel=1e-12)
    assert f_beta_from_pr(0.0, 0.0) == 0.0


def test_mae_of_identical_maps_is_zero_and_symmetric():
    rng = np.random.default_rng(0)
    s, y = rng.random((16, 16)), blob(16, 4)
    assert mae(s, s) == 0.0
    assert mae(s, y) == mae(y, s)
    assert 0 <= mae(s, y) <= 1


def test_uniform_half_four_level_loss_is_four_ln2(f64):
    gt = T.Tensor(blob(64)[None, None])
    maps = [T.Tensor(np.full((1, 1, 64 >> i, 64 >> i), 0.5)) for i in range(1, 5)]
    assert saliency_loss(maps, gt).item() == pytest.approx(4 * math.log(2), abs=1e-6)


def test_uniform_half_four_level_loss_float32():
    gt = T.Tensor(blob(64)[None, None].astype(np.float32))
    maps = [T.Tensor(np.full((1, 1, 64 >> i, 64 >> i), 0.5, np.float32)) for i in range(1, 5)]
    assert saliency_loss(maps, gt).item() == pytest.approx(4 * math.log(2), abs=1e-6)


def test_bce_matches_formula(f64):
    rng = np.random.default_rng(1)
    s, y = rng.uniform(0.05, 0.95, (2, 1, 5, 5)), (rng.random((2, 1, 5, 5)) > 0.5).astype(float)
    want = -np.mean(y * np.log(s) + (1 - y) * np.log(1 - s))
    assert bce(T.Tensor(s), T.Tensor(y)).item() == pytest.approx(want, rel=1e-12)


def test_loss_decreases_as_prediction_moves_toward_target(f64):
    y = blob(16, 4)[None, None]
    prev = None
    for t in np.linspace(0.0, 0.9, 6):
        s = 0.5 + t * (y - 0.5)
        loss = saliency_loss([T.Tensor(s)] * 4, T.Tensor(y)).item()
        if prev is not None:
            assert loss < prev
        prev = loss


def test_loss_rejects_nonbinary_gt_and_shape_mismatch():
    with pytest.raises(DataError):
        saliency_loss([T.Tensor(np.full((1, 1, 4, 4), 0.5))], T.Tensor(np.full((1, 1, 4, 4), 0.3)))
    with pytest.raises(DimensionError):
        bce(T.Tensor(np.zeros((1, 1, 4, 4))), T.Tensor(np.zeros((1, 1, 2, 2))))


def test_total_loss_gradient_is_sum_of_parts(f64):
    a, b = T.tensor(np.array(1.5), requires_grad=True), T.tensor(np.array(-0.2), requires_grad=True)
    total_loss(a * 2.0, b * 3.0).backward()
    assert a.grad == pytest.approx(2.0) and b.grad == pytest.approx(3.0)


def test_adaptive_threshold_and_degenerate_cases():
    s = np.full((8, 8), 0.2)
    assert adaptive_threshold(s) == pytest.approx(0.4)
    assert adaptive_threshold(np.full((4, 4), 0.9)) == 1.0
    p, r = precision_recall(np.zeros((4, 4)), np.zeros((4, 4)))
    assert (p, r) == (0.0, 0.0)
    assert f_beta(np.zeros((4, 4)), np.zeros((4, 4))) == 0.0
    # an all-zero map has threshold 0, so every pixel counts as predicted
    y = blob(4, 1)
    assert precision_recall(np.zeros((4, 4)), y) == (y.mean(), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.2, 5.0))
def test_fbeta_bounded_and_invariant_to_mask_preserving_rescaling(seed, gamma):
    rng = np.random.default_rng(seed)
    s = rng.random((12, 12))
    y = (rng.random((12, 12)) > 0.6).astype(float)
    f = f_beta(s, y)
    assert 0.0 <= f <= 1.0
    tau = adaptive_threshold(s)
    mask = s >= tau
    # a monotone map keeping the same binarized mask: push values far from tau
    s2 = np.where(mask, 1.0, (s / max(tau, 1e-12)) ** gamma * 0.5 * tau)
    if np.array_equal(s2 >= adaptive_threshold(s2), mask):
        assert f_beta(s2, y) == pytest.approx(f, abs=1e-12)


def _toy_manifest():
    recs = [SampleRecord("a", "X", "test", ("RGB",), {"RGB": "a.png"}, "a_gt.png"),
            SampleRecord("b", "Y", "test", ("RGB", "T"), {"RGB": "b.png", "T": "bt.png"}, "b_gt.png")]
    return Manifest(recs)


def test_report_matches_hand_aggregation():
    m = _toy_manifest()
    y = {"a": blob(8, 2), "b": blob(8, 3)}
    sa, sb_rgb, sb_t, sb_rt = np.full((8, 8), 0.25), y["b"] * 0.9, y["b"], np.zeros((8, 8))
    preds = {("a", "RGB"): sa, ("b", "RGB"): sb_rgb, ("b", "T"): sb_t, ("b", "RGB-T"): sb_rt}
    plan = expand_modes(m).plan("sole")
    report = evaluate(preds, y, plan, "sole")
    assert report.count("RGB") == 2 and report.count("T") == 1 and report.count("D") == 0
    assert report.rows["RGB"].mae == pytest.approx((mae(sa, y["a"]) + mae(sb_rgb, y["b"])) / 2)
    frac = y["b"].mean()
    assert report.rows["RGB-T"].fbeta == pytest.approx(1.3 * frac / (0.3 * frac + 1.0))
    table = report.to_table().splitlines()
    assert table[0] == "setting,count,MAE,Fbeta"
    assert not any(line.startswith("D,") for line in table)

    joint = evaluate({("a", "RGB"): y["a"], ("b", "RGB-T"): y["b"]}, y, expand_modes(m).plan("joint"), "joint")
    assert joint.rows["ALL"].count == 2 and joint.rows["ALL"].mae == 0.0


def test_missing_prediction_names_the_record():
    m = _toy_manifest()
    with pytest.raises(EvaluationError, match="record b"):
        evaluate({("a", "RGB"): blob(8)}, {"a": blob(8), "b": blob(8)}, expand_modes(m).plan("joint"))


def test_identical_predictions_give_zero_mae_column():
    m = _toy_manifest()
    y = {"a": blob(8, 2), "b": blob(8, 3)}
    plan = expand_modes(m).plan("sole")
    preds = {(rid, s): y[rid] for s, ids in plan.items() for rid in ids}
    report = evaluate(preds, y, plan)
    for row in report.rows.values():
        if row.count:
            npt.assert_equal(row.mae, 0.0)
