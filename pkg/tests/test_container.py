import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairmpc import container
from fairmpc.container import MAGIC, ObjectType
from fairmpc.errors import BadContainer


def test_header_layout():
    buf = container.pack(np.array([[1, 2, 3]], np.uint64), 2, ObjectType.SHARE)
    assert buf[:4] == MAGIC
    assert buf[4:7] == bytes([1, 2, ObjectType.SHARE])
    assert buf[7:15] == (1).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert buf[15:23] == (1).to_bytes(8, "little")
    assert len(buf) == 15 + 24


@given(st.integers(0, 5), st.integers(0, 5), st.integers(1, 2), st.sampled_from(list(ObjectType)))
def test_roundtrip(rows, cols, party, otype):
    v = np.arange(rows * cols, dtype=np.uint64).reshape(rows, cols) * np.uint64(0x9E3779B97F4A7C15)
    back, p, t = container.unpack(container.pack(v, party, otype))
    assert np.array_equal(back, v) and p == party and t == otype


@pytest.mark.parametrize("mutate", [
    lambda b: b[:10],
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + bytes([9]) + b[5:],
    lambda b: b[:6] + bytes([99]) + b[7:],
    lambda b: b[:-1],
])
def test_malformed(mutate):
    buf = container.pack(np.ones((2, 2), np.uint64), 1, ObjectType.SHARE)
    with pytest.raises(BadContainer):
        container.unpack(mutate(buf))


def test_read_checks_type(tmp_path):
    p = container.write(tmp_path / "x.fpsh", np.ones(3, np.uint64), 1, ObjectType.MODEL)
    assert container.read(p, ObjectType.MODEL)[0].shape == (1, 3)
    with pytest.raises(BadContainer):
        container.read(p, ObjectType.SHARE)
