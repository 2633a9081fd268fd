import struct

import numpy as np
import pytest

from ipssd import weights as rdw
from ipssd.errors import DataError


def test_byte_layout_by_hand():
    blob = rdw.dumps({"a.b": np.array([1.0, -2.0], np.float32)})
    want = (b"RDW1" + struct.pack("<I", 3) + b"a.b" + struct.pack("<4I", 2, 1, 1, 1)
            + struct.pack("<2f", 1.0, -2.0))
    assert blob == want


def test_round_trip(rng, tmp_path):
    params = {"conv.weight": rng.standard_normal((4, 3, 3, 3)).astype(np.float32),
              "conv.bias": rng.standard_normal(4).astype(np.float32),
              "fc.weight": rng.standard_normal((5, 7)).astype(np.float32),
              "ünï": np.zeros(1, np.float32)}
    path = tmp_path / "w.rdw"
    rdw.save(path, params)
    back = rdw.load(path)
    assert list(back) == list(params)
    for k, v in params.items():
        assert back[k].dtype == np.float32
        np.testing.assert_array_equal(back[k].reshape(v.shape), v)
        assert back[k].ndim == 4


def test_empty_container():
    assert rdw.loads(b"RDW1") == {}


@pytest.mark.parametrize("blob", [
    b"RDW2",
    b"RDW1\x05\x00",
    b"RDW1" + struct.pack("<I", 1) + b"a" + struct.pack("<4I", 2, 1, 1, 1) + b"\x00" * 4,
    b"RDW1" + struct.pack("<I", 1) + b"\xff" + struct.pack("<4I", 1, 1, 1, 1) + b"\x00" * 4,
])
def test_malformed(blob):
    with pytest.raises(DataError):
        rdw.loads(blob)


def test_duplicate_name():
    rec = struct.pack("<I", 1) + b"a" + struct.pack("<4I", 1, 1, 1, 1) + b"\x00" * 4
    with pytest.raises(DataError, match="duplicate"):
        rdw.loads(b"RDW1" + rec + rec)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        rdw.load(tmp_path / "nope.rdw")
