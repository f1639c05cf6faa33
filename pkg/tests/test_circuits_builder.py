"""Circuit IR: folding, topology, scheduling, plain eval, Bristol text."""

import numpy as np
import pytest

from scansec.circuits import builder as cb
from scansec.circuits.builder import (CONST0, CONST1, CircuitBuilder,
                                      eval_plain, from_bristol, pack_bits,
                                      to_bristol, unpack_bits)
from scansec.errors import InvalidInput


def _tiny():
    b = CircuitBuilder()
    (x,) = b.add_input("garbler", "x", 1)
    (y,) = b.add_input("evaluator", "y", 1)
    b.add_output("and", [b.and_(x, y)])
    b.add_output("xor", [b.xor(x, y)])
    b.add_output("nand", [b.inv(b.and_(x, y))])
    return b.build()


def test_truth_tables():
    c = _tiny()
    for x in (0, 1):
        for y in (0, 1):
            out = eval_plain(c, {("garbler", "x"): [x],
                                 ("evaluator", "y"): [y]})
            assert out["and"][0] == (x & y)
            assert out["xor"][0] == (x ^ y)
            assert out["nand"][0] == 1 - (x & y)


def test_stats_exact():
    c = _tiny()
    # and_(x, y) memoizes nothing: two AND emissions.  inv adds one INV.
    assert c.stats.and_count == 2
    assert c.stats.xor_count == 1
    assert c.stats.inv_count == 1
    assert c.stats.depth == 2
    assert c.n_gates == 4
    assert c.n_wires == 6


def test_constant_folding_emits_no_gates():
    b = CircuitBuilder()
    (x,) = b.add_input("garbler", "x", 1)
    assert b.xor(x, CONST0) == x
    assert b.and_(x, CONST1) == x
    assert b.and_(x, CONST0) == CONST0
    assert b.and_(x, x) == x
    assert b.xor(x, x) == CONST0
    assert b.xor(CONST1, CONST1) == CONST0
    assert b.and_(CONST1, CONST1) == CONST1
    n = b.inv(x)
    assert b.inv(n) == x
    assert b.xor(x, n) == CONST1
    assert b.and_(x, n) == CONST0
    assert b.xor(x, CONST1) == n
    b.add_output("o", [n])
    c = b.build()
    assert c.stats.and_count == 0 and c.stats.xor_count == 0
    assert c.stats.inv_count == 1


def test_constant_outputs_materialize():
    b = CircuitBuilder()
    (x,) = b.add_input("garbler", "x", 1)
    b.add_output("k", [CONST0, CONST1, x])
    c = b.build()
    for x in (0, 1):
        out = eval_plain(c, {("garbler", "x"): [x]})
        assert list(out["k"]) == [0, 1, x]


def test_topological_write_once():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 8)
    acc = xs[0]
    for w in xs[1:]:
        acc = b.and_(b.xor(acc, w), w)
    b.add_output("o", [acc])
    c = b.build()
    dst = np.arange(c.n_inputs, c.n_wires)
    assert np.all(c.gate_a < dst)
    assert np.all(c.gate_b < dst)
    lv = c.wire_level
    assert np.all(lv[dst] > lv[c.gate_a])
    assert np.all(lv[dst] > lv[c.gate_b])


def test_schedule_partitions_gates():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 6)
    ys = b.add_input("evaluator", "y", 6)
    outs = [b.and_(x, y) for x, y in zip(xs, ys)]
    while len(outs) > 1:
        outs = [b.xor(outs[i], outs[i + 1]) for i in range(len(outs) - 1)]
    b.add_output("o", outs)
    c = b.build()
    seen = set()
    for lv in c.schedule():
        for dst in (lv.xor_dst, lv.and_dst, lv.inv_dst):
            for w in dst:
                assert w not in seen
                seen.add(int(w))
    assert len(seen) == c.n_gates
    # Table positions enumerate AND gates in emission order.
    tbl = np.concatenate([lv.and_tbl for lv in c.schedule()])
    assert sorted(tbl.tolist()) == list(range(c.stats.and_count))


def test_inputs_before_gates():
    b = CircuitBuilder()
    (x,) = b.add_input("garbler", "x", 1)
    b.inv(x)
    with pytest.raises(InvalidInput):
        b.add_input("garbler", "late", 1)


def test_duplicate_names_rejected():
    b = CircuitBuilder()
    b.add_input("garbler", "x", 2)
    with pytest.raises(InvalidInput):
        b.add_input("garbler", "x", 1)
    (w,) = b.add_input("garbler", "y", 1)
    b.add_output("o", [w])
    with pytest.raises(InvalidInput):
        b.add_output("o", [w])


def test_eval_rejects_bad_inputs():
    c = _tiny()
    with pytest.raises(InvalidInput):
        eval_plain(c, {("garbler", "x"): [1]})
    with pytest.raises(InvalidInput):
        eval_plain(c, {("garbler", "x"): [1], ("evaluator", "y"): [1, 0]})
    with pytest.raises(InvalidInput):
        eval_plain(c, {("garbler", "x"): [1], ("evaluator", "q"): [1]})


def test_batched_eval_matches_single():
    rng = np.random.default_rng(7)
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 5)
    ys = b.add_input("evaluator", "y", 5)
    o = [b.xor(b.and_(x, y), b.inv(x)) for x, y in zip(xs, ys)]
    b.add_output("o", o)
    c = b.build()
    X = rng.integers(0, 2, size=(40, 5), dtype=np.uint8)
    Y = rng.integers(0, 2, size=(40, 5), dtype=np.uint8)
    batched = eval_plain(c, {("garbler", "x"): X, ("evaluator", "y"): Y})
    for i in range(40):
        one = eval_plain(c, {("garbler", "x"): X[i], ("evaluator", "y"): Y[i]})
        assert np.array_equal(one["o"], batched["o"][i])


def test_broadcast_batch_against_fixed_input():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 3)
    ys = b.add_input("evaluator", "y", 3)
    b.add_output("o", [b.and_(x, y) for x, y in zip(xs, ys)])
    c = b.build()
    Y = np.array([[0, 0, 0], [1, 1, 1]], dtype=np.uint8)
    out = eval_plain(c, {("garbler", "x"): [1, 0, 1], ("evaluator", "y"): Y})
    assert out["o"].shape == (2, 3)
    assert list(out["o"][0]) == [0, 0, 0]
    assert list(out["o"][1]) == [1, 0, 1]


def test_structural_hash_deterministic_and_sensitive():
    def build(flip):
        b = CircuitBuilder()
        xs = b.add_input("garbler", "x", 4)
        a = b.and_(xs[0], xs[1])
        z = b.xor(a, xs[3] if flip else xs[2])
        b.add_output("o", [z])
        return b.build()

    assert build(False).structural_hash() == build(False).structural_hash()
    assert build(False).structural_hash() != build(True).structural_hash()


def test_pack_unpack_roundtrip():
    for v in (0, 1, 5, 200, 65535):
        assert unpack_bits(pack_bits(v, 16)) == v
    assert pack_bits(-1, 4) == [1, 1, 1, 1]
    assert cb.unpack_signed(pack_bits(-3, 6)) == -3
    assert cb.unpack_signed(pack_bits(3, 6)) == 3


def _random_circuit(rng, n_in=6, n_gates=40):
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", n_in)
    pool = list(xs)
    for _ in range(n_gates):
        op = rng.integers(0, 3)
        i = pool[rng.integers(0, len(pool))]
        j = pool[rng.integers(0, len(pool))]
        if op == 0:
            w = b._emit(cb.XOR, i, j)
        elif op == 1:
            w = b._emit(cb.AND, i, j)
        else:
            w = b._emit(cb.INV, i, i)
        pool.append(w)
    b.add_output("o", pool[-4:])
    return b.build()


def test_bristol_roundtrip_preserves_behavior():
    rng = np.random.default_rng(11)
    for trial in range(5):
        c = _random_circuit(rng)
        c2 = from_bristol(to_bristol(c))
        X = rng.integers(0, 2, size=(32, 6), dtype=np.uint8)
        a = eval_plain(c, {("garbler", "x"): X})["o"]
        bvals = eval_plain(c2, {("garbler", "in0"): X})["out0"]
        assert np.array_equal(a, bvals)


def test_bristol_roundtrip_preserves_stats_when_outputs_fresh():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 4)
    ys = b.add_input("garbler", "y", 4)
    from scansec.circuits import gadgets as g
    b.add_output("s", g.add(b, xs, ys, 5))
    c = b.build()
    c2 = from_bristol(to_bristol(c))
    assert c2.stats == c.stats


def test_bristol_output_aliasing_input_gets_copied():
    b = CircuitBuilder()
    xs = b.add_input("garbler", "x", 2)
    b.add_output("o", [xs[1], xs[0]])
    c = b.build()
    text = to_bristol(c)
    c2 = from_bristol(text)
    out = eval_plain(c2, {("garbler", "in0"): [1, 0]})["out0"]
    assert list(out) == [0, 1]
