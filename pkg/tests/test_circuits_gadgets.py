"""Gadget correctness against integer arithmetic, mostly exhaustive."""

import math

import numpy as np
import pytest

from scansec.circuits.builder import (CONST0, CONST1, CircuitBuilder,
                                      eval_plain)
from scansec.circuits import gadgets as g


def _all_pairs(width):
    n = 1 << width
    a = np.repeat(np.arange(n), n)
    b = np.tile(np.arange(n), n)
    return a, b


def _bits(values, width):
    values = np.asarray(values, dtype=np.int64)
    return ((values[:, None] >> np.arange(width)) & 1).astype(np.uint8)


def _ints(bits, signed=False):
    width = bits.shape[-1]
    v = (bits.astype(np.int64) << np.arange(width)).sum(axis=-1)
    if signed:
        v = np.where(v >= 1 << (width - 1), v - (1 << width), v)
    return v


def _pair_circuit(width, emit):
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", width)
    ys = b.add_input("evaluator", "y", width)
    b.add_output("o", emit(b, xs, ys))
    return b.build()


def _sweep(circ, width):
    a, bb = _all_pairs(width)
    out = eval_plain(circ, {("garbler", "x"): _bits(a, width),
                            ("evaluator", "y"): _bits(bb, width)})
    return a, bb, out["o"]


def test_add_exhaustive_4bit():
    c = _pair_circuit(4, lambda b, xs, ys: g.add(b, xs, ys, 5))
    a, bb, o = _sweep(c, 4)
    assert np.array_equal(_ints(o), a + bb)


def test_add_cost_one_and_per_bit_but_last():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 8)
    ys = b.add_input("evaluator", "y", 8)
    b.add_output("o", g.add(b, xs, ys, 8))
    assert b.build().stats.and_count == 7


def test_sub_signed_exhaustive():
    c = _pair_circuit(4, lambda b, xs, ys: g.sub(b, xs, ys, 6))
    a, bb, o = _sweep(c, 4)
    sa = np.where(a >= 8, a - 16, a)
    sb = np.where(bb >= 8, bb - 16, bb)
    assert np.array_equal(_ints(o, signed=True), sa - sb)


def test_negate_and_abs():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 5)
    b.add_output("neg", g.negate(b, xs, 6))
    b.add_output("abs", g.abs_(b, g.sign_extend(xs, 6)))
    c = b.build()
    v = np.arange(32)
    out = eval_plain(c, {("garbler", "x"): _bits(v, 5)})
    sv = np.where(v >= 16, v - 32, v)
    assert np.array_equal(_ints(out["neg"], signed=True), -sv)
    assert np.array_equal(_ints(out["abs"], signed=True), np.abs(sv))


def test_cond_negate():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 4)
    (f,) = b.add_input("evaluator", "f", 1)
    b.add_output("o", g.cond_negate(b, xs, f, 5))
    c = b.build()
    v = np.arange(16)
    sv = np.where(v >= 8, v - 16, v)
    for f in (0, 1):
        out = eval_plain(c, {("garbler", "x"): _bits(v, 4),
                             ("evaluator", "f"): np.full((16, 1), f,
                                                         dtype=np.uint8)})
        want = -sv if f else sv
        assert np.array_equal(_ints(out["o"], signed=True), want)


def test_mux_exhaustive():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 3)
    ys = b.add_input("evaluator", "y", 3)
    (s,) = b.add_input("evaluator", "s", 1)
    b.add_output("o", g.mux(b, s, xs, ys))
    c = b.build()
    a, bb = _all_pairs(3)
    for s in (0, 1):
        out = eval_plain(c, {("garbler", "x"): _bits(a, 3),
                             ("evaluator", "y"): _bits(bb, 3),
                             ("evaluator", "s"): np.full((64, 1), s,
                                                         dtype=np.uint8)})
        assert np.array_equal(_ints(out["o"]), a if s else bb)


def test_comparisons_exhaustive():
    def emit(b, xs, ys):
        return [g.less_than(b, xs, ys), g.less_than(b, xs, ys, signed=True),
                g.less_equal(b, xs, ys), g.equal(b, xs, ys),
                g.is_zero(b, xs)]

    c = _pair_circuit(4, emit)
    a, bb, o = _sweep(c, 4)
    sa = np.where(a >= 8, a - 16, a)
    sb = np.where(bb >= 8, bb - 16, bb)
    assert np.array_equal(o[:, 0], (a < bb).astype(np.uint8))
    assert np.array_equal(o[:, 1], (sa < sb).astype(np.uint8))
    assert np.array_equal(o[:, 2], (a <= bb).astype(np.uint8))
    assert np.array_equal(o[:, 3], (a == bb).astype(np.uint8))
    assert np.array_equal(o[:, 4], (a == 0).astype(np.uint8))


def test_max_exhaustive_signed_and_unsigned():
    c = _pair_circuit(4, lambda b, xs, ys: g.max_(b, xs, ys)
                      + g.max_(b, xs, ys, signed=True))
    a, bb, o = _sweep(c, 4)
    sa = np.where(a >= 8, a - 16, a)
    sb = np.where(bb >= 8, bb - 16, bb)
    assert np.array_equal(_ints(o[:, :4]), np.maximum(a, bb))
    assert np.array_equal(_ints(o[:, 4:], signed=True), np.maximum(sa, sb))


def test_mul_exhaustive():
    c = _pair_circuit(4, lambda b, xs, ys: g.mul(b, xs, ys, 8))
    a, bb, o = _sweep(c, 4)
    assert np.array_equal(_ints(o), a * bb)


def test_mul_truncates():
    c = _pair_circuit(4, lambda b, xs, ys: g.mul(b, xs, ys, 5))
    a, bb, o = _sweep(c, 4)
    assert np.array_equal(_ints(o), (a * bb) % 32)


def test_square_matches_mul():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 5)
    b.add_output("o", g.square(b, xs, 10))
    c = b.build()
    v = np.arange(32)
    out = eval_plain(c, {("garbler", "x"): _bits(v, 5)})
    assert np.array_equal(_ints(out["o"]), v * v)


def test_divide_exhaustive():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 6)
    ys = b.add_input("evaluator", "y", 4)
    b.add_output("o", g.divide(b, xs, ys, 6))
    c = b.build()
    num = np.repeat(np.arange(64), 15)
    den = np.tile(np.arange(1, 16), 64)
    out = eval_plain(c, {("garbler", "x"): _bits(num, 6),
                         ("evaluator", "y"): _bits(den, 4)})
    assert np.array_equal(_ints(out["o"]), num // den)


def test_divide_with_fraction_shift():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 5)
    ys = b.add_input("evaluator", "y", 5)
    b.add_output("o", g.divide(b, xs, ys, 8, frac_shift=3))
    c = b.build()
    num = np.repeat(np.arange(32), 31)
    den = np.tile(np.arange(1, 32), 32)
    out = eval_plain(c, {("garbler", "x"): _bits(num, 5),
                         ("evaluator", "y"): _bits(den, 5)})
    assert np.array_equal(_ints(out["o"]), (num * 8) // den)


def test_isqrt_exhaustive_10bit():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 10)
    b.add_output("o", g.isqrt(b, xs))
    c = b.build()
    v = np.arange(1024)
    out = eval_plain(c, {("garbler", "x"): _bits(v, 10)})
    want = np.array([math.isqrt(int(x)) for x in v])
    assert np.array_equal(_ints(out["o"]), want)


def test_isqrt_odd_width():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 7)
    b.add_output("o", g.isqrt(b, xs))
    c = b.build()
    v = np.arange(128)
    out = eval_plain(c, {("garbler", "x"): _bits(v, 7)})
    want = np.array([math.isqrt(int(x)) for x in v])
    assert np.array_equal(_ints(out["o"]), want)


@pytest.mark.parametrize("width,size", [(1, 2), (3, 8), (3, 5), (7, 81)])
def test_one_hot(width, size):
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", width)
    b.add_output("o", g.one_hot(b, xs, size))
    c = b.build()
    v = np.arange(1 << width)
    out = eval_plain(c, {("garbler", "x"): _bits(v, width)})
    want = np.zeros((1 << width, size), dtype=np.uint8)
    for i in range(min(size, 1 << width)):
        want[i, i] = 1
    assert np.array_equal(out["o"], want)


def test_select_public_single_entry():
    b = CircuitBuilder()
    (x,) = b.add_input("garbler", "x", 1)
    b.add_output("o", g.oblivious_select(b, [5], []))
    # Selecting from a one-entry table needs no index bits at all.
    c = b.build()
    out = eval_plain(c, {("garbler", "x"): [0]})
    assert g.const_vec(5, 3)  # sanity on helper
    assert int(_ints(out["o"][None, :])[0]) == 5


def test_select_private_two_entries():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 3)
    ys = b.add_input("garbler", "y", 3)
    (s,) = b.add_input("evaluator", "s", 1)
    b.add_output("o", g.oblivious_select(b, [xs, ys], [s]))
    c = b.build()
    base = {("garbler", "x"): _bits(np.array([3]), 3),
            ("garbler", "y"): _bits(np.array([7]), 3)}
    lo = eval_plain(c, {**base, ("evaluator", "s"): [[0]]})
    hi = eval_plain(c, {**base, ("evaluator", "s"): [[1]]})
    assert int(_ints(lo["o"])[0]) == 3
    assert int(_ints(hi["o"])[0]) == 7


def test_select_public_substitution_table_exhaustive():
    rng = np.random.default_rng(81)
    table = rng.integers(0, 101, size=81 * 81).tolist()
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 7)
    ys = b.add_input("evaluator", "y", 7)
    ha = g.one_hot(b, xs, 81)
    hb = g.one_hot(b, ys, 81)
    pair = [b.and_(wa, wb) for wa in ha for wb in hb]
    b.add_output("o", g.select_public(b, table, pair))
    c = b.build()
    a = np.repeat(np.arange(81), 81)
    bb = np.tile(np.arange(81), 81)
    out = eval_plain(c, {("garbler", "x"): _bits(a, 7),
                         ("evaluator", "y"): _bits(bb, 7)})
    want = np.asarray(table).reshape(81, 81)[a, bb]
    assert np.array_equal(_ints(out["o"]), want)


def test_select_private_random_tables():
    rng = np.random.default_rng(5)
    for size in (2, 3, 7, 8):
        width = max(1, (size - 1).bit_length())
        table_vals = rng.integers(0, 16, size=size)
        b = CircuitBuilder()
        cols = [b.add_input("garbler", f"t{i}", 4) for i in range(size)]
        idx = b.add_input("evaluator", "i", width)
        b.add_output("o", g.select_private(b, cols, idx))
        c = b.build()
        feed = {("garbler", f"t{i}"): _bits(table_vals[i:i + 1], 4)
                for i in range(size)}
        for j in range(size):
            out = eval_plain(c, {**feed,
                                 ("evaluator", "i"): _bits(np.array([j]),
                                                           width)})
            assert int(_ints(out["o"])[0]) == table_vals[j]


def test_reduces():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 5)
    b.add_output("o", [g.and_reduce(b, xs), g.or_reduce(b, xs),
                       g.xor_reduce(b, xs)])
    c = b.build()
    v = np.arange(32)
    out = eval_plain(c, {("garbler", "x"): _bits(v, 5)})
    assert np.array_equal(out["o"][:, 0], (v == 31).astype(np.uint8))
    assert np.array_equal(out["o"][:, 1], (v != 0).astype(np.uint8))
    want_parity = np.array([bin(int(x)).count("1") & 1 for x in v],
                           dtype=np.uint8)
    assert np.array_equal(out["o"][:, 2], want_parity)
    assert g.and_reduce(b, []) == CONST1
    assert g.or_reduce(b, []) == CONST0
    assert g.xor_reduce(b, []) == CONST0


def test_extension_helpers():
    assert g.zero_extend([7, 8], 4) == [7, 8, CONST0, CONST0]
    assert g.sign_extend([7, 8], 4) == [7, 8, 8, 8]
    assert g.const_vec(5, 4) == [CONST1, CONST0, CONST1, CONST0]
