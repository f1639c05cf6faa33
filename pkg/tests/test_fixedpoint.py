import math

import pytest
from hypothesis import given, strategies as st

from scansec.errors import RangeError
from scansec.fixedpoint import (
    Q0_14, Q16_12, FixedFormat, decode, encode, from_unsigned,
    min_bitwidth_for_row, to_unsigned,
)


def test_encode_known_values():
    assert encode(1.5, Q16_12) == 6144
    assert encode(0.25, Q0_14) == 4096
    assert encode(-math.pi, Q16_12) == -12868


def test_wire_formats_are_16_bit():
    assert Q16_12.width == 16
    assert Q0_14.width == 16


def test_rounding_half_away_from_zero():
    fmt = FixedFormat(int_bits=7, frac_bits=1)
    assert encode(0.25, fmt) == 1      # 0.5 rounds up
    assert encode(-0.25, fmt) == -1    # -0.5 rounds away from zero
    assert encode(0.2, fmt) == 0


def test_overflow_raises():
    with pytest.raises(RangeError):
        encode(8.0, Q16_12)
    with pytest.raises(RangeError):
        encode(-8.001, Q16_12)
    with pytest.raises(RangeError):
        encode(-0.1, Q0_14)
    encode(7.999, Q16_12)
    encode(1.0, Q0_14)


@given(st.floats(min_value=-7.99, max_value=7.99))
def test_roundtrip_within_half_ulp(x):
    raw = encode(x, Q16_12)
    assert abs(decode(raw, Q16_12) - x) <= 1 / (2 ** (Q16_12.frac_bits + 1))


@given(st.floats(min_value=-7.9, max_value=7.8), st.floats(min_value=0.001, max_value=0.1))
def test_encode_monotone(x, delta):
    assert encode(x + delta, Q16_12) >= encode(x, Q16_12)


def test_twos_complement_roundtrip():
    for raw in (-32768, -1, 0, 1, 32767):
        assert from_unsigned(to_unsigned(raw, 16), 16) == raw
    assert to_unsigned(-1, 16) == 0xFFFF


def test_min_bitwidth_examples():
    assert min_bitwidth_for_row(1, 100) == 8
    assert min_bitwidth_for_row(0, 100) == 1
    assert min_bitwidth_for_row(372, 100) == 17


def test_min_bitwidth_holds_bound():
    for row in (1, 3, 17, 372):
        for score in (1, 77, 100):
            w = min_bitwidth_for_row(row, score)
            bound = row * score
            assert -(2 ** (w - 1)) <= -bound and bound <= 2 ** (w - 1) - 1
