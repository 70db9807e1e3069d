import numpy as np
import pytest

from amsn import tensor as T
from amsn.config import ModelConfig
from amsn.data.synth import synth_generate
from amsn.model import MSN

SMALL = ModelConfig(widths=(4, 6, 8, 10, 12))


@pytest.fixture
def f64():
    with T.precision("float64"):
        yield


@pytest.fixture(scope="session")
def small_model():
    return MSN.initialize(SMALL, seed=3)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    synth_generate(out, seed=0, count_per_type=2, size=64,
                   types=("RGB", "D", "RGB-D", "RGB-T", "RGB-D-T"))
    return out


def rand(rng, *shape, dtype=np.float32):
    return T.Tensor(rng.standard_normal(shape).astype(dtype))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
