"""SubsMatch similarity circuit: 1 - total-variation distance.

Both n-gram frequency vectors enter as Q0.14 words.  Each entry costs a
17-bit subtract, an absolute value and one fixed-width accumulate, so
the AND count is an exact affine function of d.  The halving is a right
shift, which is free.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInput
from ..fixedpoint import Q0_14, encode
from .builder import CircuitBuilder
from . import gadgets as g

WORD = Q0_14.width

# Sum of two honest distributions is 2.0; 18 bits leaves slack above it.
_ACC_W = 18


def emit_subsmatch(b, p_bits, q_bits):
    """Similarity of two frequency vectors given as flat Q0.14 wire words."""
    if len(p_bits) != len(q_bits) or not p_bits or len(p_bits) % WORD:
        raise InvalidInput("frequency inputs must be equal multiples of 16")
    acc = g.const_vec(0, _ACC_W)
    for k in range(len(p_bits) // WORD):
        pk = p_bits[WORD * k:WORD * (k + 1)]
        qk = q_bits[WORD * k:WORD * (k + 1)]
        diff = g.sub(b, g.zero_extend(pk, WORD + 1),
                     g.zero_extend(qk, WORD + 1), WORD + 1)
        acc = g.add(b, acc, g.zero_extend(g.abs_(b, diff), _ACC_W), _ACC_W)
    half = acc[1:]  # floor(D / 2), still Q0.14
    one = g.const_vec(Q0_14.scale, _ACC_W - 1)
    sim = g.sub(b, one, half, _ACC_W - 1, signed=False)
    return sim[:WORD]


def build_subsmatch_circuit(d):
    """Inputs p (garbler) and q (evaluator), d Q0.14 words each."""
    if d < 1:
        raise InvalidInput("d must be >= 1")
    b = CircuitBuilder()
    p = b.add_input("garbler", "p", WORD * d)
    q = b.add_input("evaluator", "q", WORD * d)
    b.add_output("similarity", emit_subsmatch(b, p, q))
    return b.build()


def encode_frequencies(fv):
    """FrequencyVector entries to raw Q0.14 words."""
    return np.array([encode(float(v), Q0_14) for v in fv.entries],
                    dtype=np.int64)


def decode_similarity(raw):
    return raw / Q0_14.scale
