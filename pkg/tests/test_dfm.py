import itertools
import math

import numpy as np
import numpy.testing as npt
import pytest

from amsn import tensor as T
from amsn.config import ModelConfig
from amsn.dfm import attention_weights, channel_attention, fuse, fusion_numel, init_dfm
from amsn.errors import ConfigurationError, DimensionError
from amsn.params import NetworkParams

# (channels, side) of every level of a 64x64 input at the default widths
PYRAMID = [(16, 32), (32, 16), (64, 8), (128, 4), (256, 2)]


@pytest.fixture(scope="module")
def params():
    p = NetworkParams()
    init_dfm(p, np.random.default_rng(0), ModelConfig())
    return p


def _features(seed, n, c, side, batch=2):
    rng = np.random.default_rng(seed)
    return [T.Tensor(rng.standard_normal((batch, c, side, side)).astype(np.float32)) for _ in range(n)]


def _conv1x1(x, w, b):
    return np.einsum("oc,bchw->bohw", w[:, :, 0, 0], x) + (0 if b is None else b[None, :, None, None])


def loop_oracle(feats, params, level):
    """Explicit per-channel N x N matrices, batch item by batch item."""
    g = lambda k: params[k].data.astype(np.float64) if k in params else None
    p = f"dfm.level{level}"
    xs = [f.data.astype(np.float64) for f in feats]
    K = [_conv1x1(x, g(f"{p}.key.weight"), g(f"{p}.key.bias")) for x in xs]
    Q = [_conv1x1(x, g(f"{p}.query.weight"), g(f"{p}.query.bias")) for x in xs]
    V = [_conv1x1(x, g(f"{p}.value.weight"), g(f"{p}.value.bias")) for x in xs]
    n = len(xs)
    b, c, h, w = xs[0].shape
    out = np.zeros((b, c, h, w))
    for bi in range(b):
        for ch in range(c):
            k = np.stack([K[i][bi, ch].ravel() for i in range(n)])
            q = np.stack([Q[i][bi, ch].ravel() for i in range(n)])
            v = np.stack([V[i][bi, ch].ravel() for i in range(n)])
            s = k @ q.T / math.sqrt(n)
            a = np.exp(s - s.max(1, keepdims=True))
            a /= a.sum(1, keepdims=True)
            out[bi, ch] = (a @ v).mean(0).reshape(h, w)
    return out


@pytest.mark.parametrize("level", range(1, 6))
def test_permutation_invariance(params, level):
    c, side = PYRAMID[level - 1]
    feats = _features(level, 3, c, side)
    ref = fuse(feats, params, level).data
    for perm in itertools.permutations(range(3)):
        out = fuse([feats[i] for i in perm], params, level).data
        assert np.abs(out - ref).max() < 1e-5
    pair = feats[:2]
    assert np.abs(fuse(pair, params, level).data - fuse(pair[::-1], params, level).data).max() < 1e-5


@pytest.mark.parametrize("level", range(1, 6))
def test_output_shape_and_dtype_for_every_arity(params, level):
    c, side = PYRAMID[level - 1]
    for n in (1, 2, 3):
        out = fuse(_features(n, n, c, side), params, level)
        assert out.shape == (2, c, side, side)
        assert out.dtype == np.float32


@pytest.mark.parametrize("level", range(1, 6))
def test_single_modality_general_path_equals_special_case(params, level):
    c, side = PYRAMID[level - 1]
    f = _features(level + 10, 1, c, side)
    a = fuse(f, params, level).data
    b = fuse(f, params, level, general=True).data
    assert np.abs(a - b).max() < 1e-6


def test_identical_pair_reduces_to_value_projection(params):
    f = _features(20, 1, 64, 8)[0]
    npt.assert_allclose(fuse([f, f], params, 3).data, fuse([f], params, 3).data, atol=1e-6)


def test_matches_per_channel_loop_oracle(params):
    for level in (3, 4, 5):
        c, side = PYRAMID[level - 1]
        feats = _features(30 + level, 3, c, side)
        npt.assert_allclose(fuse(feats, params, level).data, loop_oracle(feats, params, level), atol=1e-5)


def test_matches_loop_oracle_in_double(params, f64):
    p64 = params.astype(np.float64)
    feats = [T.Tensor(f.data.astype(np.float64)) for f in _features(40, 3, 32, 16)]
    npt.assert_allclose(fuse(feats, p64, 2).data, loop_oracle(feats, p64, 2), atol=1e-12)


def test_parameters_identical_across_arities(params):
    snapshot = {n: t.data.tobytes() for n, t in params.items()}
    ids = {n: id(t) for n, t in params.items()}
    for n in (1, 2, 3):
        fuse(_features(n, n, 32, 16), params, 2)
        assert {k: t.data.tobytes() for k, t in params.items()} == snapshot
        assert {k: id(t) for k, t in params.items()} == ids
    assert fusion_numel(params) == sum(3 * c * c + 2 * c for c, _ in PYRAMID)


def test_output_magnitude_comparable_across_arities(params):
    c, side = PYRAMID[2]
    one = fuse(_features(50, 1, c, side), params, 3).data
    three = fuse(_features(50, 3, c, side), params, 3).data
    ratio = np.sqrt(np.mean(three ** 2)) / np.sqrt(np.mean(one ** 2))
    assert 0.3 <= ratio <= 3


def test_attention_rows_are_stochastic_and_shift_invariant():
    rng = np.random.default_rng(60)
    k, q = (T.Tensor(rng.standard_normal((3, 4, 2, 2)).astype(np.float32)) for _ in range(2))
    w = attention_weights(k, q).data
    assert w.shape == (4, 3, 3)
    npt.assert_allclose(w.sum(-1), 1.0, atol=1e-6)
    # adding a constant to every score of a row leaves the row unchanged:
    # shifting one key slice by a vector orthogonal to all queries does exactly that
    with T.precision("float64"):
        k64 = rng.standard_normal((2, 1, 1, 3))
        q64 = np.zeros((2, 1, 1, 3))
        q64[..., :2] = rng.standard_normal((2, 1, 1, 2))
        base = attention_weights(T.Tensor(k64), T.Tensor(q64)).data
        shifted = k64.copy()
        shifted[0, 0, 0, 2] += 5.0
        npt.assert_allclose(attention_weights(T.Tensor(shifted), T.Tensor(q64)).data, base, atol=1e-12)


def test_channel_attention_hand_case(f64):
    k = np.array([[1.0, 0.0], [0.0, 1.0]]).reshape(2, 1, 1, 2)
    q = np.array([[1.0, 0.0], [1.0, 1.0]]).reshape(2, 1, 1, 2)
    v = np.array([[2.0, 4.0], [6.0, 8.0]]).reshape(2, 1, 1, 2)
    out = channel_attention(T.Tensor(k), T.Tensor(q), T.Tensor(v)).data.reshape(2, 2)
    # row 0 scores equal -> uniform; row 1 scores (0, 1/sqrt 2)
    a = 1.0 / (1.0 + math.exp(1 / math.sqrt(2)))
    npt.assert_allclose(out[0], [4.0, 6.0], atol=1e-12)
    npt.assert_allclose(out[1], [a * 2 + (1 - a) * 6, a * 4 + (1 - a) * 8], atol=1e-12)


def test_errors(params):
    f = _features(70, 4, 16, 32)
    with pytest.raises(DimensionError):
        fuse([], params, 1)
    with pytest.raises(DimensionError):
        fuse([f[0], T.Tensor(np.zeros((2, 16, 16, 16), np.float32))], params, 1)
    with pytest.raises(ConfigurationError):
        fuse(f, params, 1, max_modalities=3)


def test_query_projection_has_no_bias(params):
    for i in range(1, 6):
        assert f"dfm.level{i}.query.bias" not in params
        assert f"dfm.level{i}.key.bias" in params
