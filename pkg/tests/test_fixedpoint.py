import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairmpc.errors import FixedPointOverflow
from fairmpc.fixedpoint import RING64, FixedPoint, Ring, check_range, decode, encode, in_range, trunc

M = 1 << 64
in_range_floats = st.floats(min_value=-2**14, max_value=2**14, allow_nan=False)


def test_encode_examples():
    assert int(encode(1.0)) == 65536
    assert int(encode(-0.5)) == M - 32768
    assert int(encode(0.1)) == 6554
    assert decode(encode(0.1)) == 0.100006103515625


def test_decode_examples():
    assert decode(np.uint64(0)) == 0.0
    assert decode(np.uint64(1 << 63)) == -140737488355328.0
    assert decode(encode(3.25)) == 3.25


def test_trunc_examples():
    assert int(trunc(np.uint64(1 << 32), 16)) == 1 << 16
    minus_two = encode(-2.0)
    assert int(trunc(RING64.reduce(minus_two * np.uint64(1 << 16)), 16)) == int(minus_two)


def test_ties_round_away_from_zero():
    half_ulp = 2.0 ** -17
    assert int(encode(half_ulp)) == 1
    assert decode(encode(-half_ulp)) == -2.0 ** -16


@pytest.mark.parametrize("v", [2.0**15, -2.0**15, 1e9, float("inf"), float("nan")])
def test_encode_overflow(v):
    with pytest.raises(FixedPointOverflow):
        encode(v)


def test_check_range():
    check_range(encode([1.0, -3.0]))
    assert not in_range(np.uint64(1 << 63))
    with pytest.raises(FixedPointOverflow):
        check_range(np.uint64(1 << 63))


def test_trunc_bounds():
    with pytest.raises(ValueError):
        trunc(np.uint64(5), 63)
    assert int(trunc(np.uint64(5), 0)) == 5


def test_random_products_within_one_ulp(rng):
    x = rng.uniform(-2**10, 2**10, 20000)
    y = rng.uniform(-2**10, 2**10, 20000)
    xs, ys = decode(encode(x)), decode(encode(y))
    got = decode(trunc(encode(x) * encode(y), 16))
    assert np.all(np.abs(got - xs * ys) <= 2.0 ** -16)


def test_mini_ring():
    r = Ring(8)
    assert int(r.mask) == 255
    assert r.signed(np.uint64(200)) == -56
    assert int(r.from_signed(np.int64(-1))) == 255
    assert int(r.msb(np.uint64(128))) == 1
    with pytest.raises(ValueError):
        Ring(65)


def test_fixedpoint_scalar():
    a, b = FixedPoint.from_float(1.5), FixedPoint.from_float(-2.25)
    assert float(a + b) == -0.75
    assert float(a - b) == 3.75
    assert float(-a) == -1.5
    assert float(a * b) == -3.375


@given(in_range_floats)
def test_encode_error_at_most_half_ulp(v):
    assert abs(decode(encode(v)) - v) <= 2.0 ** -17


@given(st.integers(-(2**31) + 1, 2**31 - 1))
def test_encode_decode_identity_on_raw(s):
    raw = RING64.from_signed(np.int64(s))
    assert int(encode(decode(raw))) == int(raw)


@given(in_range_floats, in_range_floats)
def test_ring_add_is_exact(a, b):
    a, b = decode(encode(a)), decode(encode(b))
    assert decode(encode(a) + encode(b)) == a + b
    assert decode(np.uint64(0) - encode(a)) == -a


@given(st.floats(-2**7, 2**7, allow_nan=False), st.floats(-2**7, 2**7, allow_nan=False))
def test_product_then_trunc_within_ulp(a, b):
    a, b = decode(encode(a)), decode(encode(b))
    exact = a * b  # dyadic, exact in float64 at this size
    assert abs(decode(trunc(encode(a) * encode(b), 16)) - exact) <= 2.0 ** -16
