import numpy as np
import numpy.testing as npt
import pytest

from amsn import checkpoint
from amsn.config import ModelConfig
from amsn.errors import DataError
from amsn.model import MSN

from conftest import SMALL


def test_roundtrip_preserves_names_shapes_and_values(tmp_path):
    model = MSN.initialize(SMALL, seed=1)
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, model.state())
    loaded = checkpoint.load(path)
    assert list(loaded) == list(model.state())
    for name, arr in model.state().items():
        npt.assert_array_equal(loaded[name], arr)
    again = MSN.from_state(loaded)
    assert again.config == model.config
    assert checkpoint.dumps(again.state()) == path.read_bytes()


def test_indicator_mode_is_recovered_from_shapes():
    cfg = ModelConfig(widths=SMALL.widths, miwg_mode="indicator")
    assert MSN.from_state(MSN.initialize(cfg).state()).config.miwg_mode == "indicator"


@pytest.mark.parametrize("damage", ["magic", "truncate", "trailing", "version"])
def test_corrupt_files_are_data_errors(damage):
    blob = checkpoint.dumps({"w": np.ones((2, 3), np.float32)})
    if damage == "magic":
        blob = b"XXXX" + blob[4:]
    elif damage == "truncate":
        blob = blob[:-5]
    elif damage == "trailing":
        blob = blob + b"\0"
    else:
        blob = blob[:4] + (99).to_bytes(4, "little") + blob[8:]
    with pytest.raises(DataError):
        checkpoint.loads(blob)


def test_state_mismatches_are_reported():
    state = MSN.initialize(SMALL).state()
    bad = dict(state)
    bad["decoder.head1.bias"] = np.zeros(2, np.float32)
    with pytest.raises(DataError, match="decoder.head1.bias"):
        MSN.from_state(bad)
    extra = dict(state, **{"stray.weight": np.zeros(1, np.float32)})
    with pytest.raises(DataError, match="stray"):
        MSN.from_state(extra)
    del bad["msfe.classifier.weight"]
    with pytest.raises(DataError):
        MSN.from_state(bad)


def test_missing_file_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        checkpoint.load(tmp_path / "nope.ckpt")
