import pytest

from amsn.gradsuite import CASES, run_case

CHEAP = ["add", "mul", "sigmoid", "log", "softmax_rows", "conv2d_3x3_s2", "bilinear_upsample",
         "miwg", "fuse_n3", "bce"]


def test_every_network_piece_is_registered():
    for name in ("conv2d_3x3_s1", "conv2d_1x1", "matmul", "extract", "modality_loss", "fuse_n1_general",
                 "decode", "saliency_loss", "msn_total"):
        assert name in CASES


@pytest.mark.parametrize("name", CHEAP)
def test_cheap_cases_pass_with_a_plain_double_reference(name):
    res = run_case(name, seeds=3, extended_reference=False)
    assert res.max_rel_error < 1e-4
    assert res.checked > 0 and res.seeds == 3


def test_network_case_passes_with_extended_reference():
    res = run_case("msn_total", seeds=2)
    assert res.max_rel_error < 1e-4
