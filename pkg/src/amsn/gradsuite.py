"""Finite-difference gradient suite over every op and the assembled network.

Each case builds a small double-precision problem from a seeded generator,
reduces it to a scalar with a fixed random projection and compares backprop
against central differences. Cases are registered in ``CASES`` by name.

Network-level cases use the training initialisation, whose saturated gates
and collapsed 1x1 levels leave some gradients near 1e-10. Double-precision
differences of an O(1) loss resolve only about 4e-12, so by default the
reference differences are taken in long double (the analytic side stays
double); ``extended_reference=False`` gives the plain double comparison.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .decoder import decode, init_decoder
from .dfm import fuse, init_dfm
from .gradcheck import check_gradients
from .losses import bce, saliency_loss
from .modality import MODALITIES, all_settings, indicator
from .model import MSN
from .msfe import backbone_stage, classify_modality, extract, init_msfe, miwg, modality_loss
from .params import NetworkParams
from .tensor import Tensor

TINY_WIDTHS = (2, 3, 4, 5, 6)
Case = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor], int | None]]


@dataclass
class OpResult:
    name: str
    max_rel_error: float
    checked: int
    skipped_kinks: int
    seeds: int
    seconds: float

    def line(self) -> str:
        return (f"{self.name:<22} max_rel={self.max_rel_error:.3e} checked={self.checked} "
                f"skipped={self.skipped_kinks} seeds={self.seeds} time={self.seconds:.2f}s")


def _var(rng, *shape, lo=-1.0, hi=1.0) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def _away_from_zero(rng, *shape) -> Tensor:
    # relu/clamp inputs kept clear of their kinks so few coordinates get skipped
    x = rng.uniform(0.1, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return Tensor(x, requires_grad=True)


def _project(out: Tensor, rng) -> Tensor:
    return T.sum_all(out * Tensor(rng.normal(size=out.shape)))


def _unary(op):
    def case(rng):
        x = _var(rng, 2, 3, 4)
        r = Tensor(rng.normal(size=x.shape))
        return (lambda: T.sum_all(op(x) * r)), [x], None
    return case


def _case_add(rng):
    a, b = _var(rng, 3, 4), _var(rng, 3, 4)
    r = Tensor(rng.normal(size=(3, 4)))
    return (lambda: T.sum_all((a + b * 2.0 - 0.5) * r)), [a, b], None


def _case_mul(rng):
    a, b = _var(rng, 3, 4), _var(rng, 3, 4)
    r = Tensor(rng.normal(size=(3, 4)))
    return (lambda: T.sum_all(a * b * r)), [a, b], None


def _case_relu(rng):
    x = _away_from_zero(rng, 2, 3, 4)
    r = Tensor(rng.normal(size=x.shape))
    return (lambda: T.sum_all(T.relu(x) * r)), [x], None


def _case_clamp(rng):
    x = Tensor(rng.uniform(-1.5, 1.5, size=(3, 5)), requires_grad=True)
    r = Tensor(rng.normal(size=x.shape))
    return (lambda: T.sum_all(T.clamp(x, -0.7, 0.8) * r)), [x], None


def _case_log(rng):
    x = Tensor(rng.uniform(0.3, 2.0, size=(3, 4)), requires_grad=True)
    r = Tensor(rng.normal(size=x.shape))
    return (lambda: T.sum_all(T.log(x) * r)), [x], None


def _case_mean_all(rng):
    x = _var(rng, 2, 3, 4)
    return (lambda: T.mean_all(x * x)), [x], None


def _case_mean_axis(rng):
    x = _var(rng, 2, 3, 4)
    axis = int(rng.integers(0, 3))
    return (lambda: _project(T.mean_axis(x, axis), np.random.default_rng(1))), [x], None


def _case_gap(rng):
    x = _var(rng, 2, 3, 4, 5)
    r = Tensor(rng.normal(size=(2, 3)))
    return (lambda: T.sum_all(T.global_avg_pool(x) * r)), [x], None


def _case_reshape_permute(rng):
    x = _var(rng, 2, 3, 4)
    r = Tensor(rng.normal(size=(4, 6)))
    return (lambda: T.sum_all(T.reshape(T.permute(x, (2, 0, 1)), (4, 6)) * r)), [x], None


def _case_concat_split(rng):
    a, b = _var(rng, 2, 3), _var(rng, 2, 2)
    r_top = Tensor(rng.normal(size=(1, 5)))
    r_bottom = Tensor(rng.normal(size=(3, 5)))

    def fn():
        top, bottom = T.split_axis0(T.concat([a, b], axis=1), [1, 1])
        bottom = T.concat([bottom, top * 2.0, top], axis=0)
        return T.sum_all(top * r_top) + T.sum_all(bottom * r_bottom)
    return fn, [a, b], None


def _case_stack(rng):
    xs = [_var(rng, 2, 3) for _ in range(3)]
    r = Tensor(rng.normal(size=(2, 3, 3)))
    return (lambda: T.sum_all(T.stack(xs, axis=1) * r)), xs, None


def _case_matmul(rng):
    a, b = _var(rng, 2, 3, 4), _var(rng, 2, 4, 5)
    return (lambda: _project(T.matmul(a, b), np.random.default_rng(2))), [a, b], None


def _case_softmax(rng):
    x = Tensor(rng.normal(scale=2.0, size=(2, 3, 4)), requires_grad=True)
    r = Tensor(rng.normal(size=x.shape))
    return (lambda: T.sum_all(T.softmax_rows(x) * r)), [x], None


def _case_linear(rng):
    x, w, b = _var(rng, 3, 4), _var(rng, 4, 5), _var(rng, 5)
    return (lambda: _project(T.linear(x, w, b), np.random.default_rng(3))), [x, w, b], None


def _case_channel_mul(rng):
    x, w = _var(rng, 2, 3, 4, 4), _var(rng, 2, 3)
    return (lambda: _project(T.channel_mul(x, w), np.random.default_rng(4))), [x, w], None


def _case_channel_affine(rng):
    x, s, b = _var(rng, 2, 3, 4, 4), _var(rng, 3), _var(rng, 3)
    return (lambda: _project(T.channel_affine(x, s, b), np.random.default_rng(5))), [x, s, b], None


def _conv_case(k: int, stride: int, pad: int):
    def case(rng):
        x, w, b = _var(rng, 2, 3, 6, 6), _var(rng, 4, 3, k, k), _var(rng, 4)
        return (lambda: _project(T.conv2d(x, w, b, stride, pad), np.random.default_rng(6))), [x, w, b], None
    return case


def _case_upsample(rng):
    x = _var(rng, 2, 2, 3, 4)
    oh, ow = int(rng.integers(3, 9)), int(rng.integers(4, 10))
    return (lambda: _project(T.bilinear_upsample(x, oh, ow), np.random.default_rng(7))), [x], None


def _tiny_params(rng, mode="recursive") -> tuple[NetworkParams, ModelConfig]:
    cfg = ModelConfig(widths=TINY_WIDTHS, miwg_mode=mode)
    params = NetworkParams()
    init_msfe(params, rng, cfg)
    init_dfm(params, rng, cfg)
    init_decoder(params, rng, cfg)
    return params, cfg


def _case_miwg(rng):
    params, _ = _tiny_params(rng)
    level = int(rng.integers(1, 6))
    ctx_len = params[f"msfe.miwg{level}.weight"].shape[0] - TINY_WIDTHS[level - 1]
    ctx, gap = _var(rng, 2, ctx_len), _var(rng, 2, TINY_WIDTHS[level - 1])
    w, b = params[f"msfe.miwg{level}.weight"], params[f"msfe.miwg{level}.bias"]
    return (lambda: _project(miwg(ctx, gap, params, level), np.random.default_rng(8))), [ctx, gap, w, b], None


def _case_stage(rng):
    params, _ = _tiny_params(rng)
    x = _var(rng, 1, 3, 8, 8)
    inputs = [x] + [params[n] for n in params.names("msfe.stage1.")]
    return (lambda: _project(backbone_stage(x, params, 1), np.random.default_rng(9))), inputs, 8


def _case_extract(rng):
    mode = ("recursive", "indicator")[int(rng.integers(0, 2))]
    params, _ = _tiny_params(rng, mode)
    x = _var(rng, 2, 3, 8, 8)
    inds = [indicator(MODALITIES[int(i)]) for i in rng.integers(0, 3, size=2)]
    proj = np.random.default_rng(10)
    weights = [Tensor(proj.normal(size=(2, c, max(1, 8 >> i), max(1, 8 >> i)))) for i, c in enumerate(TINY_WIDTHS, 1)]

    def fn():
        feats = extract(x, inds, params, mode).features
        total = T.sum_all(feats[0] * weights[0])
        for f, r in zip(feats[1:], weights[1:]):
            total = total + T.sum_all(f * r)
        return total
    return fn, [x] + [params[n] for n in params.names("msfe.")], 4


def _case_modality_loss(rng):
    params, _ = _tiny_params(rng)
    f5 = _var(rng, 3, TINY_WIDTHS[-1], 1, 1, lo=0.0, hi=2.0)
    labels = [MODALITIES[int(i)] for i in rng.integers(0, 3, size=3)]
    inputs = [f5, params["msfe.classifier.weight"], params["msfe.classifier.bias"]]
    return (lambda: modality_loss(classify_modality(f5, params), labels)), inputs, None


def _fuse_case(n: int, general: bool = False):
    def case(rng):
        params, _ = _tiny_params(rng)
        level = int(rng.integers(1, 6))
        c = TINY_WIDTHS[level - 1]
        feats = [_var(rng, 2, c, 2, 2) for _ in range(n)]
        inputs = feats + [params[x] for x in params.names(f"dfm.level{level}.")]
        return (lambda: _project(fuse(feats, params, level, general=general), np.random.default_rng(11))), inputs, None
    return case


def _pyramid(rng, batch=1, size=8):
    return [_var(rng, batch, c, max(1, size >> i), max(1, size >> i)) for i, c in enumerate(TINY_WIDTHS, 1)]


def _case_decode(rng):
    params, _ = _tiny_params(rng)
    fused = _pyramid(rng)
    proj = np.random.default_rng(12)
    weights = [Tensor(proj.normal(size=(1, 1, max(1, 8 >> i), max(1, 8 >> i)))) for i in range(1, 5)]

    def fn():
        maps = decode(fused, params)
        total = T.sum_all(maps[0] * weights[0])
        for s, r in zip(maps[1:], weights[1:]):
            total = total + T.sum_all(s * r)
        return total
    return fn, fused + [params[n] for n in params.names("decoder.")], 6


def _case_bce(rng):
    s = Tensor(rng.uniform(0.05, 0.95, size=(2, 1, 4, 4)), requires_grad=True)
    y = Tensor((rng.random(size=(2, 1, 4, 4)) > 0.5).astype(np.float64))
    return (lambda: bce(s, y)), [s], None


def _case_saliency_loss(rng):
    maps = [Tensor(rng.uniform(0.05, 0.95, size=(2, 1, 8 >> i, 8 >> i)), requires_grad=True) for i in range(0, 4)]
    y = Tensor((rng.random(size=(2, 1, 8, 8)) > 0.5).astype(np.float64))
    return (lambda: saliency_loss(maps, y)), maps, None


def _case_msn_total(rng):
    params, cfg = _tiny_params(rng)
    model = MSN(params, cfg)
    settings = all_settings()
    mods = settings[int(rng.integers(0, len(settings)))]
    images = {m: _var(rng, 2, 3, 8, 8) for m in mods}
    gt = Tensor((rng.random(size=(2, 1, 8, 8)) > 0.5).astype(np.float64))

    def fn():
        return model.losses(model.forward(images), gt).l_total
    return fn, list(images.values()) + list(params.values()), 1


CASES: dict[str, Case] = {
    "add": _case_add,
    "mul": _case_mul,
    "sigmoid": _unary(T.sigmoid),
    "relu": _case_relu,
    "clamp": _case_clamp,
    "log": _case_log,
    "mean_all": _case_mean_all,
    "mean_axis": _case_mean_axis,
    "global_avg_pool": _case_gap,
    "reshape_permute": _case_reshape_permute,
    "concat_split": _case_concat_split,
    "stack": _case_stack,
    "matmul": _case_matmul,
    "softmax_rows": _case_softmax,
    "linear": _case_linear,
    "channel_mul": _case_channel_mul,
    "channel_affine": _case_channel_affine,
    "conv2d_3x3_s1": _conv_case(3, 1, 1),
    "conv2d_3x3_s2": _conv_case(3, 2, 1),
    "conv2d_1x1": _conv_case(1, 1, 0),
    "bilinear_upsample": _case_upsample,
    "miwg": _case_miwg,
    "backbone_stage": _case_stage,
    "extract": _case_extract,
    "modality_loss": _case_modality_loss,
    "fuse_n1": _fuse_case(1),
    "fuse_n1_general": _fuse_case(1, general=True),
    "fuse_n2": _fuse_case(2),
    "fuse_n3": _fuse_case(3),
    "decode": _case_decode,
    "bce": _case_bce,
    "saliency_loss": _case_saliency_loss,
    "msn_total": _case_msn_total,
}


def run_case(name: str, seeds: int = 20, eps: float = 1e-4, extended_reference: bool = True) -> OpResult:
    case = CASES[name]
    worst, checked, skipped = 0.0, 0, 0
    start = time.perf_counter()
    with T.precision("float64"):
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            fn, inputs, coords = case(rng)
            res = check_gradients(fn, inputs, eps, max_coords=coords, rng=np.random.default_rng(1000 + seed),
                                  extended_reference=extended_reference)
            worst = max(worst, res.max_rel_error)
            checked += res.checked
            skipped += res.skipped_kinks
    return OpResult(name, worst, checked, skipped, seeds, time.perf_counter() - start)


def run_suite(seeds: int = 20, eps: float = 1e-4, names: Iterable[str] | None = None,
              on_result: Callable[[OpResult], None] | None = None,
              extended_reference: bool = True) -> list[OpResult]:
    """Run every registered case (or ``names``) over ``seeds`` seeds.

    Analytic gradients are always double precision. The finite-difference
    reference is long double unless ``extended_reference`` is off.
    """
    results = []
    for name in (names or CASES):
        res = run_case(name, seeds, eps, extended_reference)
        results.append(res)
        if on_result:
            on_result(res)
    return results
