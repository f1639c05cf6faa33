"""Fixed-point formats used inside the comparison circuits.

All circuit arithmetic runs on two's-complement integers.  A FixedFormat
pins how a real value is scaled into such an integer; the two 16-bit wire
formats (Q16.12 signed, Q0.14 unsigned) are what payloads serialize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import RangeError


@dataclass(frozen=True)
class FixedFormat:
    int_bits: int
    frac_bits: int
    signed: bool = True

    @property
    def width(self) -> int:
        return self.int_bits + self.frac_bits + (1 if self.signed else 0)

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    def __post_init__(self):
        if self.int_bits < 0 or self.frac_bits < 0 or self.width > 64:
            raise ValueError(f"bad format {self}")


# 16-bit wire words: 12 fractional bits for signed saccade features and
# scores, 14 fractional bits for unsigned n-gram frequencies.
Q16_12 = FixedFormat(int_bits=3, frac_bits=12, signed=True)
Q0_14 = FixedFormat(int_bits=2, frac_bits=14, signed=False)


def encode(x: float, fmt: FixedFormat) -> int:
    """Scale x to an integer, rounding half away from zero."""
    if not math.isfinite(x):
        raise RangeError(f"cannot encode {x!r}")
    scaled = x * fmt.scale
    raw = math.floor(scaled + 0.5) if scaled >= 0 else math.ceil(scaled - 0.5)
    if fmt.signed:
        limit = 1 << (fmt.int_bits + fmt.frac_bits)
        if not -limit < raw < limit:
            raise RangeError(f"{x} out of range for {fmt}")
    else:
        if raw < 0 or raw >= 1 << fmt.width:
            raise RangeError(f"{x} out of range for {fmt}")
    return raw


def decode(raw: int, fmt: FixedFormat) -> float:
    return raw / fmt.scale


def to_unsigned(raw: int, width: int) -> int:
    """Two's-complement image of raw in the given bit-width."""
    if not -(1 << width - 1) <= raw < 1 << width:
        raise RangeError(f"{raw} does not fit {width} bits")
    return raw & ((1 << width) - 1)


def from_unsigned(word: int, width: int, signed: bool = True) -> int:
    if signed and word >= 1 << width - 1:
        return word - (1 << width)
    return word


def min_bitwidth_for_row(row_index: int, max_sub_score: int, gaps: tuple[int, int] = (0, 0)) -> int:
    """Smallest signed width holding every DP value reachable by this row."""
    if row_index < 0:
        raise ValueError("row_index must be >= 0")
    bound = row_index * max(max_sub_score, gaps[0], gaps[1])
    if bound <= 0:
        return 1
    # ceil(log2(bound + 1)) == bound.bit_length() for integers
    return bound.bit_length() + 1
