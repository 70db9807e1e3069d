import numpy as np
import numpy.testing as npt
import pytest

from amsn import tensor as T
from amsn.config import TrainConfig, apply_overrides, dump_config, load_config, parse_pairs
from amsn.data.manifest import Manifest
from amsn.data.sampler import batch_sampler
from amsn.errors import ConfigurationError, NumericError
from amsn.evaluation import evaluate_model
from amsn.model import MSN
from amsn.params import NetworkParams
from amsn.trainer import OptimizerState, lr_schedule, sgd_nesterov_step, train, train_step

SMALL = dict(widths=(4, 6, 8, 10, 12), augment=False, batch_size=4)


@pytest.fixture(scope="module")
def manifest(synth_dir):
    return Manifest.read(synth_dir / "manifest.tsv")


def test_nesterov_step_matches_hand_update(f64):
    p = NetworkParams({"a.weight": T.Tensor(np.array([1.0, -2.0])), "a.bias": T.Tensor(np.array([0.5]))})
    state = OptimizerState()
    lr, mu, wd = 0.1, 0.9, 0.01
    w, b = np.array([1.0, -2.0]), np.array([0.5])
    vw, vb = np.zeros(2), np.zeros(1)
    for gw, gb in ([np.array([0.3, 0.1]), np.array([1.0])], [np.array([-0.2, 0.4]), np.array([0.5])]):
        p["a.weight"].grad, p["a.bias"].grad = gw.copy(), gb.copy()
        sgd_nesterov_step(p, state, lr, mu, wd)
        g = gw + wd * w  # decay on weights only
        vw = mu * vw + g
        w = w - lr * (g + mu * vw)
        vb = mu * vb + gb
        b = b - lr * (gb + mu * vb)
        npt.assert_allclose(p["a.weight"].data, w, rtol=1e-14)
        npt.assert_allclose(p["a.bias"].data, b, rtol=1e-14)
        assert state.velocity["a.weight"].shape == (2,)


def test_lr_schedule_steps_every_20_epochs():
    cfg = TrainConfig(lr=0.01)
    assert [lr_schedule(e, cfg) for e in (0, 19, 20, 39, 40)] == pytest.approx(
        [0.01, 0.01, 0.008, 0.008, 0.0064])


def test_config_file_format_and_unknown_keys(tmp_path):
    f = tmp_path / "cfg.txt"
    f.write_text("# desk run\nlr = 0.02  # faster\nepochs=3\ninput_types=RGB,RGB-T\naugment=no\n\n")
    cfg = load_config(f, {"seed": "9"})
    assert (cfg.lr, cfg.epochs, cfg.input_types, cfg.augment, cfg.seed) == (0.02, 3, ("RGB", "RGB-T"), False, 9)
    assert load_config(None, parse_pairs(dump_config(cfg).splitlines())) == cfg
    with pytest.raises(ConfigurationError, match="'momentom'"):
        apply_overrides(cfg, {"momentom": "0.5"})
    with pytest.raises(ConfigurationError):
        apply_overrides(cfg, {"input_types": "RGB,X"})
    with pytest.raises(ConfigurationError):
        parse_pairs(["just words"])
    with pytest.raises(ConfigurationError):
        TrainConfig(lr_decay=1.5)


def test_every_parameter_receives_gradient_within_50_batches(manifest):
    model = MSN.initialize(TrainConfig(**SMALL).model_config(), seed=0)
    touched = set()
    for batch in batch_sampler(manifest, 4, np.random.default_rng(0), size=64, steps=50):
        model.params.zero_grad()
        out = model.forward({m: T.Tensor(batch.images[m]) for m in batch.modalities})
        model.losses(out, T.Tensor(batch.gt)).l_total.backward()
        touched |= {n for n, t in model.params.items() if t.grad is not None and np.any(t.grad != 0)}
    assert touched == set(model.params)


def test_checkpoint_holds_one_parameter_set(manifest, tmp_path):
    res = train(TrainConfig(epochs=1, **SMALL), manifest, out_dir=tmp_path)
    names = list(res.model.state())
    for m in ("rgb", "depth", "thermal", ".RGB", ".D.", ".T."):
        assert not any(m in n for n in names)
    log = (tmp_path / "loss_log.csv").read_text().splitlines()
    assert log[0] == "step,type,l_ce,l_modality,l_total,lr"
    assert len(log) == 1 + len(res.history)
    assert (tmp_path / "final.ckpt").exists() and (tmp_path / "config.txt").exists()


def test_identical_runs_give_identical_checkpoints(manifest, tmp_path):
    cfg = TrainConfig(epochs=2, seed=5, **SMALL)
    train(cfg, manifest, out_dir=tmp_path / "a")
    train(cfg, manifest, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "final.ckpt").read_bytes() == (tmp_path / "b" / "final.ckpt").read_bytes()


def test_loss_falls_over_a_short_run(manifest):
    res = train(TrainConfig(epochs=40, lr=0.01, **SMALL), manifest)
    losses = [r.l_total for r in res.history]
    k = max(1, len(losses) // 10)
    assert np.median(losses[-k:]) < np.median(losses[:k])


def test_non_finite_loss_raises_numeric_error(manifest):
    cfg = TrainConfig(**SMALL)
    model = MSN.initialize(cfg.model_config(), seed=0)
    model.params["decoder.head1.bias"].data[:] = np.nan
    batch = next(batch_sampler(manifest, 2, np.random.default_rng(0), size=64))
    with pytest.raises(NumericError, match="non-finite"):
        train_step(model, batch, OptimizerState(), cfg, 0.01)


@pytest.mark.slow
def test_rgb_only_training_hurts_depth_setting(manifest):
    mixed_cfg = TrainConfig(epochs=60, lr=0.01, **SMALL)
    rgb_cfg = TrainConfig(epochs=60, lr=0.01, input_types=("RGB",), **SMALL)
    d_records = Manifest([r for r in manifest if "D" in r.modalities])
    mixed = train(mixed_cfg, manifest).model
    rgb_only = train(rgb_cfg, manifest).model
    score = lambda m: evaluate_model(m, d_records, "sole", 64).rows["D"].mae
    assert score(rgb_only) > score(mixed)
