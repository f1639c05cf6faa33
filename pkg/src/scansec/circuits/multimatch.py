"""MultiMatch five-component similarity circuit.

Layout per party: one 128-bit block per saccade holding eight Q16.12
words in FEATURES order.  The circuit recomputes each saccade's end
point (s1 = s0 + d), builds the squared-Euclidean cost matrix over the
displacement vectors, runs the DTW dynamic program while recording a
2-bit move code per cell, then walks the alignment backwards for a
fixed m+n-1 steps.  Pointer state is a pair of one-hot vectors updated
by conditional shifts; every per-step fetch (move code, saccade
features) is an oblivious selection against those one-hots, and an
active flag zeroes the contribution of steps after the walk reaches
cell (1,1).  Component sums are normalized by in-circuit restoring
division so the alignment length never leaves the circuit.

Bit-widths assume encoder-validated inputs: coordinates in [0,1],
angles in [-pi,pi], amplitudes at most sqrt(2), durations in seconds
below 8.  Out-of-range malicious inputs wrap silently; they only
corrupt the dishonest party's own score.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import InvalidInput
from ..fixedpoint import Q16_12, encode, to_unsigned
from .builder import CONST0, CONST1, CircuitBuilder
from . import gadgets as g

FEATURES = ("dx", "dy", "amp", "theta", "turn", "s0x", "s0y", "dur")
WORD = Q16_12.width
BLOCK = WORD * len(FEATURES)

SCALE = Q16_12.scale
PI_E = encode(math.pi, Q16_12)          # 12868
TWO_PI_E = 2 * PI_E
SQRT2_E = encode(math.sqrt(2.0), Q16_12)  # 5793

# component order matches reference.MultiMatchScores
_COMPONENTS = ("shape", "length", "direction", "position", "duration")
_NORMS = {"shape": PI_E, "length": SQRT2_E, "direction": PI_E,
          "position": SQRT2_E}


def _mask_const(flag, value, width):
    """flag * value as wires; free, the adder downstream pays the ANDs."""
    return [flag if (value >> k) & 1 else CONST0 for k in range(width)]


def _masked(b, flag, bits):
    return [b.and_(flag, v) for v in bits]


def _select(b, onehot, vectors):
    """One-hot selection over equal-width wire vectors; len ANDs per bit."""
    width = len(vectors[0])
    return [g.xor_reduce(b, [b.and_(oh, vec[k])
                             for oh, vec in zip(onehot, vectors)])
            for k in range(width)]


def _fetch_bit(b, pi, pj, mat):
    """mat[i][j] for the one-hot (pi, pj); inner dimension first."""
    rows = [g.xor_reduce(b, [b.and_(pjj, mij)
                             for pjj, mij in zip(pj, row)])
            for row in mat]
    return g.xor_reduce(b, [b.and_(pii, r) for pii, r in zip(pi, rows)])


def _shift_onehot(b, oh, flag):
    """Move the one-hot one slot toward index 0 when flag is set."""
    out = [g.mux(b, flag, [oh[k + 1]], [oh[k]])[0] for k in range(len(oh) - 1)]
    out.append(b.and_(oh[-1], b.inv(flag)))
    return out


def _wrap_diff(b, xa, xb):
    """Signed angle difference wrapped into [-pi, pi], 17 bits."""
    d = g.sub(b, g.sign_extend(xa, WORD + 1), g.sign_extend(xb, WORD + 1),
              WORD + 1)
    w = WORD + 1
    over = g.less_than(b, g.const_vec(PI_E, w), d, signed=True)
    d = g.sub(b, d, _mask_const(over, TWO_PI_E, w), w)
    under = g.less_than(b, d, g.const_vec(to_unsigned(-PI_E, w), w),
                        signed=True)
    d = g.add(b, d, _mask_const(under, TWO_PI_E, w), w)
    return d


def _abs_diff(b, xa, xb, out_width):
    d = g.sub(b, g.sign_extend(xa, WORD + 1), g.sign_extend(xb, WORD + 1),
              WORD + 1)
    return g.abs_(b, d)[:out_width]


def _hypot(b, xa_pair, xb_pair):
    """floor(sqrt(dx^2 + dy^2)) of two 13-bit coordinate differences."""
    dx = _abs_diff(b, xa_pair[0], xb_pair[0], 13)
    dy = _abs_diff(b, xa_pair[1], xb_pair[1], 13)
    total = g.add(b, g.zero_extend(g.square(b, dx, 26), 27),
                  g.zero_extend(g.square(b, dy, 26), 27), 27)
    return g.isqrt(b, total)  # 14 bits


def emit_multimatch(b, a_bits, b_bits):
    """Six Q16.12 scores from two flat saccade-block wire vectors."""
    if (not a_bits or not b_bits
            or len(a_bits) % BLOCK or len(b_bits) % BLOCK):
        raise InvalidInput(f"saccade inputs must be multiples of {BLOCK} bits")
    len_a, len_b = len(a_bits) // BLOCK, len(b_bits) // BLOCK

    def feature_columns(bits, count):
        cols = {}
        for k, name in enumerate(FEATURES):
            cols[name] = [bits[BLOCK * i + WORD * k:BLOCK * i + WORD * (k + 1)]
                          for i in range(count)]
        return cols

    fa = feature_columns(a_bits, len_a)
    fb = feature_columns(b_bits, len_b)
    for cols, count in ((fa, len_a), (fb, len_b)):
        cols["s1x"] = [g.add(b, cols["s0x"][i], cols["dx"][i], WORD)
                       for i in range(count)]
        cols["s1y"] = [g.add(b, cols["s0y"][i], cols["dy"][i], WORD)
                       for i in range(count)]

    # cost matrix: squared Euclidean distance of displacement vectors,
    # dropped to Q12 by a 12-bit right shift
    cost = []
    for i in range(len_a):
        row = []
        for j in range(len_b):
            dx = _abs_diff(b, fa["dx"][i], fb["dx"][j], 14)
            dy = _abs_diff(b, fa["dy"][i], fb["dy"][j], 14)
            total = g.add(b, g.zero_extend(g.square(b, dx, 28), 29),
                          g.zero_extend(g.square(b, dy, 28), 29), 29)
            row.append(total[12:])  # 17 bits
        cost.append(row)

    # DTW with per-cell 2-bit move codes (bit0 = diagonal, bit1 = up;
    # left = 00).  Tie-break diagonal, then up, matching the reference
    # backtrack.
    w_d = max((((len_a + len_b - 1) << 15)).bit_length(), 17)
    dmat = [[None] * len_b for _ in range(len_a)]
    code0 = [[CONST0] * len_b for _ in range(len_a)]
    code1 = [[CONST0] * len_b for _ in range(len_a)]
    for i in range(len_a):
        for j in range(len_b):
            c = g.zero_extend(cost[i][j], w_d)
            if i == 0 and j == 0:
                dmat[i][j] = c
            elif i == 0:
                dmat[i][j] = g.add(b, dmat[i][j - 1], c, w_d)
            elif j == 0:
                dmat[i][j] = g.add(b, dmat[i - 1][j], c, w_d)
                code1[i][j] = CONST1
            else:
                diag, up, left = dmat[i - 1][j - 1], dmat[i - 1][j], dmat[i][j - 1]
                le_du = g.less_equal(b, diag, up)
                le_dl = g.less_equal(b, diag, left)
                le_ul = g.less_equal(b, up, left)
                isdiag = b.and_(le_du, le_dl)
                isup = b.and_(b.inv(isdiag), le_ul)
                best = g.mux(b, isdiag, diag, g.mux(b, le_ul, up, left))
                dmat[i][j] = g.add(b, best, c, w_d)
                code0[i][j] = isdiag
                code1[i][j] = isup
        if i >= 2:
            dmat[i - 2] = None  # only two DP rows stay live

    # fixed-length backtrack
    steps = len_a + len_b - 1
    cw = max(1, steps.bit_length())
    pi = [CONST0] * (len_a - 1) + [CONST1]
    pj = [CONST0] * (len_b - 1) + [CONST1]
    active = CONST1

    acc_w = {
        "shape": (steps * PI_E).bit_length(),
        "length": (steps * SQRT2_E).bit_length(),
        "direction": (steps * PI_E).bit_length(),
        "position": (steps * SQRT2_E).bit_length(),
        "duration": (steps * SCALE).bit_length(),
    }
    acc = {name: g.const_vec(0, w) for name, w in acc_w.items()}
    count = g.const_vec(0, cw)

    sel_names = ("turn", "amp", "theta", "dur", "s0x", "s0y", "s1x", "s1y")
    for _ in range(steps):
        sa = {n: _select(b, pi, fa[n]) for n in sel_names}
        sb = {n: _select(b, pj, fb[n]) for n in sel_names}

        dev = {
            "shape": g.abs_(b, _wrap_diff(b, sa["turn"], sb["turn"]))[:14],
            "length": _abs_diff(b, sa["amp"], sb["amp"], 13),
            "direction": g.abs_(b, _wrap_diff(b, sa["theta"], sb["theta"]))[:14],
        }
        h0 = _hypot(b, (sa["s0x"], sa["s0y"]), (sb["s0x"], sb["s0y"]))
        h1 = _hypot(b, (sa["s1x"], sa["s1y"]), (sb["s1x"], sb["s1y"]))
        dev["position"] = g.add(b, g.zero_extend(h0, 15),
                                g.zero_extend(h1, 15), 15)[1:14]
        dmax = g.max_(b, sa["dur"], sb["dur"])
        dmax = [b.or_(dmax[0], g.is_zero(b, dmax))] + dmax[1:]
        dev["duration"] = g.divide(b, _abs_diff(b, sa["dur"], sb["dur"], 16),
                                   dmax, 13, frac_shift=12)

        for name in _COMPONENTS:
            acc[name] = g.add(b, acc[name],
                              g.zero_extend(_masked(b, active, dev[name]),
                                            acc_w[name]),
                              acc_w[name])
        count = g.add(b, count, g.zero_extend([active], cw), cw)

        done = b.and_(pi[0], pj[0])
        step = b.and_(active, b.inv(done))
        c0 = _fetch_bit(b, pi, pj, code0)
        c1 = _fetch_bit(b, pi, pj, code1)
        move_diag = b.and_(step, c0)
        move_up = b.and_(step, c1)
        move_left = b.and_(step, b.inv(b.or_(c0, c1)))
        vshift = b.xor(move_diag, move_up)
        hshift = b.xor(move_diag, move_left)
        pi = _shift_onehot(b, pi, vshift)
        pj = _shift_onehot(b, pj, hshift)
        active = b.and_(active, b.inv(done))

    # normalize: component = 1 - dev_sum / (count * norm), Q12 out
    comps = {}
    for name in _COMPONENTS:
        if name == "duration":
            den = g.zero_extend(count, cw)
            q = g.divide(b, acc[name], den, 13, frac_shift=0)
        else:
            den = g.mul(b, g.zero_extend(count, cw + 14),
                        g.const_vec(_NORMS[name], 14), cw + 14)
            q = g.divide(b, acc[name], den, 13, frac_shift=12)
        diff = g.sub(b, g.const_vec(SCALE, 14), g.zero_extend(q, 14), 14,
                     signed=False)
        # encode rounding can push a deviation a few LSB past its
        # normalizer; floor the component at zero instead of wrapping
        pos = b.inv(diff[-1])
        comps[name] = [b.and_(v, pos) for v in diff]

    total = g.const_vec(0, 16)
    for name in _COMPONENTS:
        total = g.add(b, total, g.zero_extend(comps[name], 16), 16)
    overall = g.divide(b, total, g.const_vec(5, 3), 13, frac_shift=0)

    out = {name: g.zero_extend(comps[name], WORD) for name in _COMPONENTS}
    out["overall"] = g.zero_extend(overall, WORD)
    return out


def build_multimatch_circuit(len_a, len_b):
    """Private saccade sequences in, six Q16.12 scores out."""
    if len_a < 1 or len_b < 1:
        raise InvalidInput("sequence lengths must be >= 1")
    b = CircuitBuilder()
    a_bits = b.add_input("garbler", "a", BLOCK * len_a)
    b_bits = b.add_input("evaluator", "b", BLOCK * len_b)
    for name, wires in emit_multimatch(b, a_bits, b_bits).items():
        b.add_output(name, wires)
    return b.build()


def encode_saccades(ss):
    """SaccadeSequence to an (n, 8) array of raw Q16.12 feature words."""
    out = np.empty((len(ss), len(FEATURES)), dtype=np.int64)
    values = {
        "dx": ss.dx, "dy": ss.dy, "amp": ss.amp, "theta": ss.theta,
        "turn": ss.turn, "s0x": ss.s0x, "s0y": ss.s0y,
        "dur": ss.dur_ms / 1000.0,
    }
    for k, name in enumerate(FEATURES):
        col = values[name]
        for i in range(len(ss)):
            out[i, k] = encode(float(col[i]), Q16_12)
    return out


def saccades_to_bits(encoded):
    """Raw feature words to the circuit's input bit layout."""
    flat = [to_unsigned(int(v), WORD) for v in np.asarray(encoded).reshape(-1)]
    bits = np.empty(WORD * len(flat), dtype=np.uint8)
    for i, v in enumerate(flat):
        for k in range(WORD):
            bits[WORD * i + k] = (v >> k) & 1
    return bits


def decode_scores(outputs):
    """Raw output words to floats in component order plus overall."""
    out = {}
    for name in _COMPONENTS + ("overall",):
        out[name] = int(outputs[name]) / SCALE
    return out
