"""Boolean circuit IR over {XOR, AND, INV} gates.

Wires are dense integer ids: inputs first, then one wire per gate in
emission order, so the gate list is topological by construction and every
wire is written exactly once.  The builder folds constant inputs as gates
are emitted (the only optimization performed), so a finished circuit
contains no constant wires.

Garbling cares about two things fixed here: the emission order of AND
gates (garbled tables are streamed in that order) and the level schedule
(gates grouped by logic depth for vectorized processing).
"""

from __future__ import annotations

import array
import hashlib
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInput

XOR = 0
AND = 1
INV = 2

# Sentinel wire ids for constants; valid everywhere a wire id is accepted
# by the builder, never present in a finished circuit.
CONST0 = -1
CONST1 = -2

_OP_NAMES = {XOR: "XOR", AND: "AND", INV: "INV"}


@dataclass(frozen=True)
class CircuitStats:
    and_count: int
    xor_count: int
    inv_count: int
    depth: int


class _LevelOps:
    """Gate indices of one depth level, split by op."""

    __slots__ = ("xor_dst", "xor_a", "xor_b", "and_dst", "and_a", "and_b",
                 "and_tbl", "inv_dst", "inv_a")

    def __init__(self, xor_dst, xor_a, xor_b, and_dst, and_a, and_b,
                 and_tbl, inv_dst, inv_a):
        self.xor_dst = xor_dst
        self.xor_a = xor_a
        self.xor_b = xor_b
        self.and_dst = and_dst
        self.and_a = and_a
        self.and_b = and_b
        self.and_tbl = and_tbl  # position in emission-order table stream
        self.inv_dst = inv_dst
        self.inv_a = inv_a


class BoolCircuit:
    """Immutable gate list plus wire maps.  Build via CircuitBuilder."""

    def __init__(self, n_inputs, gate_op, gate_a, gate_b, wire_level,
                 input_map, output_map):
        self.n_inputs = n_inputs
        self.gate_op = gate_op
        self.gate_a = gate_a
        self.gate_b = gate_b
        self.wire_level = wire_level
        self.input_map = input_map    # (party, name) -> wire id array
        self.output_map = output_map  # name -> wire id array
        self.n_gates = len(gate_op)
        self.n_wires = n_inputs + self.n_gates
        counts = np.bincount(gate_op, minlength=3)
        self.stats = CircuitStats(
            and_count=int(counts[AND]),
            xor_count=int(counts[XOR]),
            inv_count=int(counts[INV]),
            depth=int(wire_level.max(initial=0)),
        )
        self._schedule = None
        self._hash = None

    def input_wires(self, party, name):
        return self.input_map[(party, name)]

    def output_wires(self, name):
        return self.output_map[name]

    def schedule(self):
        """Per-level gate slices, emission order preserved within a level."""
        if self._schedule is not None:
            return self._schedule
        if self.n_gates == 0:
            self._schedule = []
            return self._schedule
        dst = np.arange(self.n_inputs, self.n_wires, dtype=np.int64)
        gate_level = self.wire_level[dst]
        order = np.argsort(gate_level, kind="stable")
        table_pos = np.cumsum(self.gate_op == AND) - 1
        levels = []
        bounds = np.searchsorted(gate_level[order],
                                 np.arange(1, self.stats.depth + 2))
        start = 0
        for stop in bounds:
            idx = order[start:stop]
            start = stop
            if len(idx) == 0:
                continue
            op = self.gate_op[idx]
            xg = idx[op == XOR]
            ag = idx[op == AND]
            ig = idx[op == INV]
            levels.append(_LevelOps(
                xor_dst=xg + self.n_inputs, xor_a=self.gate_a[xg],
                xor_b=self.gate_b[xg],
                and_dst=ag + self.n_inputs, and_a=self.gate_a[ag],
                and_b=self.gate_b[ag], and_tbl=table_pos[ag],
                inv_dst=ig + self.n_inputs, inv_a=self.gate_a[ig],
            ))
        self._schedule = levels
        return levels

    def structural_hash(self):
        """SHA-256 over the full structure; identifies a circuit on the wire."""
        if self._hash is None:
            h = hashlib.sha256()
            h.update(self.n_inputs.to_bytes(8, "big"))
            h.update(self.gate_op.tobytes())
            h.update(self.gate_a.tobytes())
            h.update(self.gate_b.tobytes())
            for key in sorted(self.input_map):
                h.update(repr(key).encode())
                h.update(self.input_map[key].tobytes())
            for name in sorted(self.output_map):
                h.update(name.encode())
                h.update(self.output_map[name].tobytes())
            self._hash = h.digest()
        return self._hash


class CircuitBuilder:
    """Append-only circuit writer with constant folding.

    Inputs must all be declared before the first gate so that input wires
    occupy a contiguous prefix of the id space.
    """

    def __init__(self):
        # compact buffers: algorithm circuits reach tens of millions of
        # gates, where plain int lists cost ~10x the memory
        self._op = array.array("B")
        self._a = array.array("q")
        self._b = array.array("q")
        self._level = array.array("l")
        self._n_inputs = 0
        self._inputs_closed = False
        self._input_map = {}
        self._output_map = {}
        self._inv_of = {}
        self._const_wire = {}

    def add_input(self, party, name, width):
        if self._inputs_closed:
            raise InvalidInput("inputs must be declared before gates")
        if (party, name) in self._input_map:
            raise InvalidInput(f"duplicate input {(party, name)}")
        if width < 1:
            raise InvalidInput("input width must be >= 1")
        base = self._n_inputs
        self._n_inputs += width
        self._level.extend([0] * width)
        wires = list(range(base, base + width))
        self._input_map[(party, name)] = wires
        return wires

    def _emit(self, op, a, b):
        self._inputs_closed = True
        w = self._n_inputs + len(self._op)
        self._op.append(op)
        self._a.append(a)
        self._b.append(b)
        lv = self._level
        la = lv[a]
        lb = lv[b]
        lv.append((la if la >= lb else lb) + 1)
        return w

    def xor(self, a, b):
        if a < 0:
            if b < 0:
                return CONST0 if a == b else CONST1
            a, b = b, a
        if b < 0:
            return a if b == CONST0 else self.inv(a)
        if a == b:
            return CONST0
        if self._inv_of.get(a) == b:
            return CONST1
        return self._emit(XOR, a, b)

    def and_(self, a, b):
        if a < 0:
            if b < 0:
                return CONST1 if (a == b == CONST1) else CONST0
            a, b = b, a
        if b < 0:
            return CONST0 if b == CONST0 else a
        if a == b:
            return a
        if self._inv_of.get(a) == b:
            return CONST0
        return self._emit(AND, a, b)

    def inv(self, a):
        if a < 0:
            return CONST1 if a == CONST0 else CONST0
        w = self._inv_of.get(a)
        if w is None:
            w = self._emit(INV, a, a)
            self._inv_of[a] = w
            self._inv_of[w] = a
        return w

    def or_(self, a, b):
        return self.inv(self.and_(self.inv(a), self.inv(b)))

    def _materialize_const(self, c):
        # Output-position constants need a real wire; gate-position ones
        # never survive folding.
        w = self._const_wire.get(c)
        if w is not None:
            return w
        if self._n_inputs == 0:
            raise InvalidInput("constant output requires at least one input")
        zero = self._const_wire.get(CONST0)
        if zero is None:
            zero = self._emit(XOR, 0, 0)
            self._const_wire[CONST0] = zero
        if c == CONST0:
            return zero
        w = self.inv(zero)
        self._const_wire[CONST1] = w
        return w

    def add_output(self, name, wires):
        if name in self._output_map:
            raise InvalidInput(f"duplicate output {name!r}")
        self._output_map[name] = [
            self._materialize_const(w) if w < 0 else w for w in wires
        ]

    def build(self):
        if not self._output_map:
            raise InvalidInput("circuit has no outputs")
        return BoolCircuit(
            n_inputs=self._n_inputs,
            gate_op=np.asarray(self._op, dtype=np.uint8),
            gate_a=np.asarray(self._a, dtype=np.int64),
            gate_b=np.asarray(self._b, dtype=np.int64),
            wire_level=np.asarray(self._level, dtype=np.int32),
            input_map={k: np.asarray(v, dtype=np.int64)
                       for k, v in self._input_map.items()},
            output_map={k: np.asarray(v, dtype=np.int64)
                        for k, v in self._output_map.items()},
        )


def eval_plain(circuit, inputs):
    """Evaluate on cleartext bits.

    inputs maps (party, name) to a bit array of shape (width,) or
    (batch, width); any batched input broadcasts the batch over all
    outputs.  Returns name -> bit array of matching shape.
    """
    batch = 1
    batched = False
    for key, bits in inputs.items():
        arr = np.asarray(bits)
        if arr.ndim == 2:
            batched = True
            if batch not in (1, arr.shape[0]):
                raise InvalidInput("mismatched batch sizes")
            batch = arr.shape[0]
    vals = np.empty((circuit.n_wires, batch), dtype=np.uint8)
    seen = set()
    for key, bits in inputs.items():
        wires = circuit.input_map.get(key)
        if wires is None:
            raise InvalidInput(f"unknown input {key}")
        arr = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
        if arr.shape[1] != len(wires):
            raise InvalidInput(f"input {key} expects {len(wires)} bits")
        vals[wires] = arr.T
        seen.add(key)
    missing = set(circuit.input_map) - seen
    if missing:
        raise InvalidInput(f"missing inputs {sorted(missing)}")

    for lv in circuit.schedule():
        if len(lv.xor_dst):
            vals[lv.xor_dst] = vals[lv.xor_a] ^ vals[lv.xor_b]
        if len(lv.and_dst):
            vals[lv.and_dst] = vals[lv.and_a] & vals[lv.and_b]
        if len(lv.inv_dst):
            vals[lv.inv_dst] = vals[lv.inv_a] ^ 1

    out = {}
    for name, wires in circuit.output_map.items():
        bits = vals[wires].T
        out[name] = bits if batched else bits[0]
    return out


def pack_bits(value, width):
    """Little-endian bit vector of a (possibly negative) integer."""
    return [(value >> k) & 1 for k in range(width)]


def unpack_bits(bits):
    return sum(int(b) << k for k, b in enumerate(bits))


def unpack_signed(bits):
    raw = unpack_bits(bits)
    half = 1 << (len(bits) - 1)
    return raw - (1 << len(bits)) if raw >= half else raw


def pack_words(values, width):
    """Concatenate fixed-width little-endian words into one bit array."""
    out = np.empty(width * len(values), dtype=np.uint8)
    for i, v in enumerate(values):
        for k in range(width):
            out[width * i + k] = (int(v) >> k) & 1
    return out


def unpack_words(bits, width, signed=False):
    take = unpack_signed if signed else unpack_bits
    return [take(bits[i:i + width]) for i in range(0, len(bits), width)]


def to_bristol(circuit):
    """Render in Bristol-fashion text (outputs renumbered to the last wires).

    Output wires that alias inputs or other outputs are copied through a
    double INV first so the renumbering stays a bijection.
    """
    n_in = circuit.n_inputs
    op = list(circuit.gate_op)
    ga = list(circuit.gate_a)
    gb = list(circuit.gate_b)

    out_names = list(circuit.output_map)
    out_wires = []
    used = set()
    for name in out_names:
        for w in circuit.output_map[name]:
            w = int(w)
            if w < n_in or w in used:
                t = n_in + len(op)
                op.append(INV)
                ga.append(w)
                gb.append(w)
                w = n_in + len(op)
                op.append(INV)
                ga.append(t)
                gb.append(t)
            used.add(w)
            out_wires.append(w)

    n_wires = n_in + len(op)
    perm = _output_last_permutation(n_wires, out_wires)

    lines = [f"{len(op)} {n_wires}"]
    in_widths = " ".join(str(len(v)) for v in circuit.input_map.values())
    lines.append(f"{len(circuit.input_map)} {in_widths}")
    out_widths = " ".join(str(len(circuit.output_map[n])) for n in out_names)
    lines.append(f"{len(out_names)} {out_widths}")
    lines.append("")
    for i in range(len(op)):
        o = op[i]
        w = perm[n_in + i]
        a = perm[ga[i]]
        if o == INV:
            lines.append(f"1 1 {a} {w} INV")
        else:
            b = perm[gb[i]]
            lines.append(f"2 1 {a} {b} {w} {_OP_NAMES[o]}")
    return "\n".join(lines) + "\n"


def _output_last_permutation(n_wires, out_wires):
    """Bijection old id -> new id keeping relative order of non-outputs."""
    perm = np.empty(n_wires, dtype=np.int64)
    is_out = np.zeros(n_wires, dtype=bool)
    is_out[out_wires] = True
    rest = np.nonzero(~is_out)[0]
    perm[rest] = np.arange(len(rest))
    base = len(rest)
    for k, w in enumerate(out_wires):
        perm[w] = base + k
    return perm


def from_bristol(text):
    """Parse Bristol-fashion text back into a BoolCircuit.

    Gates must already be topologically ordered (standard for published
    circuit files).  Inputs are named in0, in1, ... under party "garbler"
    and outputs out0, out1, ...; callers remap as needed.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    n_gates, n_wires = map(int, lines[0].split())
    in_hdr = list(map(int, lines[1].split()))
    out_hdr = list(map(int, lines[2].split()))
    in_widths = in_hdr[1:]
    out_widths = out_hdr[1:]
    if len(in_widths) != in_hdr[0] or len(out_widths) != out_hdr[0]:
        raise InvalidInput("malformed bristol header")

    b = CircuitBuilder()
    wire_of = {}
    pos = 0
    for k, width in enumerate(in_widths):
        ws = b.add_input("garbler", f"in{k}", width)
        for w in ws:
            wire_of[pos] = w
            pos += 1

    for ln in lines[3:3 + n_gates]:
        parts = ln.split()
        fan_in = int(parts[0])
        name = parts[-1].upper()
        if name in ("INV", "NOT"):
            a, out = int(parts[2]), int(parts[3])
            w = b._emit(INV, wire_of[a], wire_of[a])
        elif name == "EQW":
            a, out = int(parts[2]), int(parts[3])
            t = b._emit(INV, wire_of[a], wire_of[a])
            w = b._emit(INV, t, t)
        elif name in ("XOR", "AND") and fan_in == 2:
            a, c, out = int(parts[2]), int(parts[3]), int(parts[4])
            w = b._emit(XOR if name == "XOR" else AND, wire_of[a], wire_of[c])
        else:
            raise InvalidInput(f"unsupported bristol gate {name!r}")
        wire_of[out] = w

    pos = n_wires - sum(out_widths)
    for k, width in enumerate(out_widths):
        b.add_output(f"out{k}", [wire_of[pos + j] for j in range(width)])
        pos += width
    return b.build()
