import numpy as np
import numpy.testing as npt
import pytest

from amsn import tensor as T
from amsn.config import ModelConfig
from amsn.errors import ConfigurationError
from amsn.modality import MODALITIES, indicator
from amsn.model import MSN
from amsn.msfe import (backbone_numel, backbone_stage, classify_modality, extract, init_msfe, miwg,
                       modality_loss, msfe_numel)
from amsn.params import NetworkParams

from conftest import SMALL, rand


@pytest.fixture
def params():
    p = NetworkParams()
    init_msfe(p, np.random.default_rng(0), SMALL)
    return p


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def test_indicators_are_orthonormal():
    vecs = [indicator(m).vector for m in MODALITIES]
    for i, a in enumerate(vecs):
        for j, b in enumerate(vecs):
            assert float(a @ b) == (1.0 if i == j else 0.0)


def test_indicator_length_mismatch_is_a_configuration_error(params):
    x = rand(np.random.default_rng(0), 1, 3, 32, 32)
    with pytest.raises(ConfigurationError):
        extract(x, indicator("RGB", 4), params)


def test_miwg_zero_parameters_give_half(params):
    params["msfe.miwg2.weight"].data[:] = 0
    params["msfe.miwg2.bias"].data[:] = 0
    w = miwg(rand(np.random.default_rng(1), 2, 4), rand(np.random.default_rng(2), 2, 6), params, 2)
    npt.assert_array_equal(w.data, 0.5)


def test_miwg_matches_affine_sigmoid_oracle(params, f64):
    rng = np.random.default_rng(5)
    p64 = params.astype(np.float64)
    ctx, gap = rng.standard_normal((3, 4)), rng.standard_normal((3, 6))
    w = miwg(T.Tensor(ctx), T.Tensor(gap), p64, 2).data
    W, b = p64["msfe.miwg2.weight"].data, p64["msfe.miwg2.bias"].data
    npt.assert_allclose(w, _sigmoid(np.concatenate([ctx, gap], 1) @ W + b), rtol=1e-12, atol=1e-15)


def test_same_image_same_modality_gives_identical_gates(params):
    x = rand(np.random.default_rng(3), 1, 3, 32, 32)
    a = extract(x, indicator("RGB"), params)
    b = extract(T.Tensor(x.data.copy()), indicator("RGB"), params)
    for wa, wb in zip(a.weights, b.weights):
        npt.assert_array_equal(wa.data, wb.data)


def test_identity_gating_equals_bare_backbone(params):
    x = rand(np.random.default_rng(4), 2, 3, 64, 64)
    feats = extract(x, indicator("D"), params, gate_override=1.0)
    y = x
    for level in range(1, 6):
        y = backbone_stage(y, params, level)
        npt.assert_array_equal(feats.features[level - 1].data, y.data)


def test_indicator_changes_features(params):
    x = rand(np.random.default_rng(6), 1, 3, 64, 64)
    a = extract(x, indicator("RGB"), params).features[-1].data
    b = extract(x, indicator("T"), params).features[-1].data
    assert np.abs(a - b).max() > 0


def test_feature_shapes_and_gate_range(params):
    x = rand(np.random.default_rng(7), 2, 3, 64, 64)
    feats = extract(x, indicator("RGB"), params)
    raw = x
    for i, (f, w) in enumerate(zip(feats.features, feats.weights), start=1):
        assert f.shape == (2, SMALL.widths[i - 1], 64 >> i, 64 >> i)
        assert w.shape == (2, SMALL.widths[i - 1])
        assert np.all((w.data > 0) & (w.data < 1))
        raw = backbone_stage(raw, params, i)
        assert np.all(np.abs(f.data) <= np.abs(raw.data) + 1e-7)
        raw = f


def test_classifier_rows_sum_to_one_and_zero_weights_are_uniform(params):
    f5 = rand(np.random.default_rng(8), 4, 12, 2, 2)
    probs = classify_modality(f5, params).data
    npt.assert_allclose(probs.sum(1), 1.0, atol=1e-6)
    params["msfe.classifier.weight"].data[:] = 0
    params["msfe.classifier.bias"].data[:] = 0
    npt.assert_allclose(classify_modality(f5, params).data, 1 / 3, atol=1e-7)


def test_modality_loss_values(f64):
    uniform = T.Tensor(np.full((2, 3), 1 / 3))
    assert modality_loss(uniform, ["RGB", "T"]).item() == pytest.approx(np.log(3), abs=1e-12)
    onehot = T.Tensor(np.eye(3)[[0, 2]])
    assert modality_loss(onehot, ["RGB", "T"]).item() == pytest.approx(-np.log(1 - 1e-7), abs=1e-12)


def test_modality_loss_matches_per_sample_loop(f64):
    rng = np.random.default_rng(9)
    p = rng.random((5, 3))
    p /= p.sum(1, keepdims=True)
    labels = ["RGB", "D", "T", "T", "RGB"]
    oracle = np.mean([-np.log(p[i, MODALITIES.index(m)]) for i, m in enumerate(labels)])
    assert modality_loss(T.Tensor(p), labels).item() == pytest.approx(oracle, rel=1e-12)


def test_parameters_are_shared_across_modalities():
    model = MSN.initialize(SMALL, seed=0)
    x = rand(np.random.default_rng(10), 1, 3, 32, 32)
    seen = {}
    for m in MODALITIES:
        model.params.zero_grad()
        out = model.forward({m: x})
        T.sum_all(out.saliency[0]).backward()
        seen[m] = {n for n, t in model.params.items() if t.grad is not None and np.any(t.grad)}
    # one parameter set: every modality's forward touches the same backbone tensors
    assert seen["RGB"] & seen["D"] & seen["T"] >= set(model.params.names("msfe.stage"))


def test_parameter_budget_against_backbone_and_three_streams():
    p = NetworkParams()
    init_msfe(p, np.random.default_rng(0), ModelConfig())
    bb, total = backbone_numel(p), msfe_numel(p)
    assert total < 1.1 * bb
    assert total < 0.55 * 3 * bb


def test_indicator_mode_uses_indicator_context_at_every_level():
    p = NetworkParams()
    init_msfe(p, np.random.default_rng(0), ModelConfig(miwg_mode="indicator"))
    widths = ModelConfig().widths
    for i, c in enumerate(widths, start=1):
        assert p[f"msfe.miwg{i}.weight"].shape == (3 + c, c)
