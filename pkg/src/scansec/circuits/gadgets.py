"""Arithmetic and selection gadgets over wire vectors.

All values are little-endian bit vectors (index 0 = LSB) in two's
complement where signedness matters.  Vectors may contain the builder's
CONST0/CONST1 sentinels; folding keeps them free.  Every gadget documents
its AND cost since that is what garbled tables are paid in.
"""

from __future__ import annotations

from .builder import CONST0, CONST1
from ..errors import InvalidInput


def const_vec(value, width):
    """Constant bit vector (free: sentinels only)."""
    return [CONST1 if (value >> k) & 1 else CONST0 for k in range(width)]


def zero_extend(xs, width):
    if len(xs) > width:
        raise InvalidInput("cannot shrink by extension")
    return list(xs) + [CONST0] * (width - len(xs))


def sign_extend(xs, width):
    if len(xs) > width:
        raise InvalidInput("cannot shrink by extension")
    return list(xs) + [xs[-1]] * (width - len(xs))


def extend(xs, width, signed):
    return sign_extend(xs, width) if signed else zero_extend(xs, width)


def add(b, xs, ys, width, signed=False, cin=CONST0):
    """x + y + cin mod 2^width.  Cost: width-1 ANDs minus constant folds."""
    xs = extend(xs, width, signed)
    ys = extend(ys, width, signed)
    out = []
    c = cin
    for i, (a, d) in enumerate(zip(xs, ys)):
        ac = b.xor(a, c)
        out.append(b.xor(ac, d))
        if i + 1 < width:
            # Carry via the shared-XOR form: one AND per bit.
            c = b.xor(c, b.and_(ac, b.xor(d, c)))
    return out


def sub(b, xs, ys, width, signed=True):
    """x - y mod 2^width via x + ~y + 1."""
    ys = extend(ys, width, signed)
    return add(b, xs, [b.inv(y) for y in ys], width, signed, cin=CONST1)


def negate(b, xs, width, signed=True):
    xs = extend(xs, width, signed)
    return add(b, [b.inv(x) for x in xs], const_vec(0, width), width,
               cin=CONST1)


def cond_negate(b, xs, flag, width):
    """flag ? -x : x for signed x.  Cost: width ANDs."""
    xs = sign_extend(xs, width)
    flipped = [b.xor(x, flag) for x in xs]
    return add(b, flipped, const_vec(0, width), width, cin=flag)


def abs_(b, xs):
    """|x| of a signed vector; result same width (INT_MIN stays negative)."""
    return cond_negate(b, xs, xs[-1], len(xs))


def mux(b, sel, on_true, on_false):
    """Bitwise sel ? t : f.  Cost: 1 AND per bit."""
    if len(on_true) != len(on_false):
        raise InvalidInput("mux arms must have equal width")
    return [b.xor(f, b.and_(sel, b.xor(t, f)))
            for t, f in zip(on_true, on_false)]


def less_than(b, xs, ys, signed=False):
    """1 iff x < y.  Cost: about max(width)+1 ANDs."""
    w = max(len(xs), len(ys)) + 1
    return sub(b, extend(xs, w, signed), extend(ys, w, signed), w)[-1]


def less_equal(b, xs, ys, signed=False):
    return b.inv(less_than(b, ys, xs, signed))


def equal(b, xs, ys):
    """1 iff x == y.  Cost: width-1 ANDs."""
    if len(xs) != len(ys):
        raise InvalidInput("equal operands must have equal width")
    return and_reduce(b, [b.inv(b.xor(x, y)) for x, y in zip(xs, ys)])


def is_zero(b, xs):
    return and_reduce(b, [b.inv(x) for x in xs])


def and_reduce(b, ws):
    ws = list(ws)
    if not ws:
        return CONST1
    while len(ws) > 1:
        nxt = [b.and_(ws[i], ws[i + 1]) for i in range(0, len(ws) - 1, 2)]
        if len(ws) % 2:
            nxt.append(ws[-1])
        ws = nxt
    return ws[0]


def or_reduce(b, ws):
    return b.inv(and_reduce(b, [b.inv(w) for w in ws]))


def xor_reduce(b, ws):
    ws = list(ws)
    if not ws:
        return CONST0
    acc = ws[0]
    for w in ws[1:]:
        acc = b.xor(acc, w)
    return acc


def max_(b, xs, ys, signed=False):
    """Elementwise-width max.  Cost: lt + mux."""
    if len(xs) != len(ys):
        raise InvalidInput("max operands must have equal width")
    lt = less_than(b, xs, ys, signed)
    return mux(b, lt, ys, xs)


def mul(b, xs, ys, out_width):
    """Unsigned schoolbook product truncated to out_width bits.

    Cost: one AND per contributing partial-product bit plus ripple adds.
    """
    acc = const_vec(0, out_width)
    for j, y in enumerate(ys):
        if j >= out_width:
            break
        row = [b.and_(x, y) for x in xs[:out_width - j]]
        hi = add(b, acc[j:], row, out_width - j)
        acc = acc[:j] + hi
    return acc


def square(b, xs, out_width):
    return mul(b, xs, xs, out_width)


def divide(b, num, den, quot_width, frac_shift=0):
    """Restoring division: floor(num * 2^frac_shift / den), unsigned.

    den must be nonzero and the quotient must fit quot_width bits (high
    bits are truncated otherwise).  Every dividend bit is processed, but
    iterations whose remainder is still all-constant fold away for free.
    Cost per remaining bit: one subtract plus one mux over the remainder
    width.
    """
    ext = list(const_vec(0, frac_shift)) + list(num)
    den_ext = zero_extend(den, len(den) + 1)
    rw = len(den) + 1
    rem = const_vec(0, rw)
    quot = [CONST0] * len(ext)
    for k in range(len(ext) - 1, -1, -1):
        # Restored remainder stays < den, so the shifted-out top bit is 0.
        rem = [ext[k]] + rem[:-1]
        trial = sub(b, rem, den_ext, rw, signed=False)
        ok = b.inv(trial[-1])  # no borrow: divisor fits
        quot[k] = ok
        rem = mux(b, ok, trial, rem)
    return zero_extend(quot[:quot_width], quot_width)


def isqrt(b, xs):
    """Integer square root of an unsigned vector, restoring, bit by bit.

    Returns ceil(width/2) bits.  Cost per result bit: subtract + mux over
    the working width.
    """
    w = len(xs)
    out_w = (w + 1) // 2
    rw = w + 2
    rem = zero_extend(xs, rw)
    root = const_vec(0, out_w)
    for k in range(out_w - 1, -1, -1):
        # Trial subtrahend: (root << (k+1)) + (1 << 2k).
        trial_sub = const_vec(0, rw)
        for i, r in enumerate(root[k + 1:], start=0):
            pos = (k + 1) + (k + 1 + i)
            if pos < rw:
                trial_sub[pos] = r
        if 2 * k < rw:
            trial_sub[2 * k] = CONST1
        trial = sub(b, rem, trial_sub, rw, signed=False)
        ok = b.inv(trial[-1])
        root[k] = ok
        rem = mux(b, ok, trial, rem)
    return root


def one_hot(b, index_bits, size):
    """Decode index bits to `size` indicator wires.

    Cost: about `size` ANDs for the cross products plus the subtree
    decodes.  Indices >= size are simply not materialized.
    """
    if size < 1:
        raise InvalidInput("one_hot needs size >= 1")
    if size == 1:
        return [CONST1]
    n = len(index_bits)
    if n == 1:
        outs = [b.inv(index_bits[0])]
        if size > 1:
            outs.append(index_bits[0])
        return outs[:size]
    lo_n = n // 2
    lo_size = min(1 << lo_n, size)
    lo = one_hot(b, index_bits[:lo_n], lo_size)
    hi_size = (size + (1 << lo_n) - 1) >> lo_n
    hi = one_hot(b, index_bits[lo_n:], hi_size)
    outs = []
    for j in range(size):
        h = hi[j >> lo_n]
        l = lo[j & ((1 << lo_n) - 1)]
        outs.append(b.and_(h, l))
    return outs


def select_public(b, table, onehot, out_width=None):
    """Select table[i] for private one-hot i over a public integer table.

    Pure XOR aggregation: free once the one-hot exists.
    """
    if len(table) != len(onehot):
        raise InvalidInput("table and one-hot sizes differ")
    if out_width is None:
        out_width = max(max(table).bit_length(), 1)
    out = []
    for bit in range(out_width):
        out.append(xor_reduce(
            b, [w for v, w in zip(table, onehot) if (v >> bit) & 1]))
    return out


def select_private(b, table, index_bits):
    """Mux tree over private value vectors.  Cost: (len-1) * width ANDs."""
    layer = [list(v) for v in table]
    for s in index_bits:
        if len(layer) == 1:
            break
        nxt = []
        for i in range(0, len(layer) - 1, 2):
            nxt.append(mux(b, s, layer[i + 1], layer[i]))
        if len(layer) % 2:
            nxt.append(layer[-1])
        layer = nxt
    return layer[0]


def oblivious_select(b, table, index_bits):
    """Select a table entry by private index.

    Public integer tables go through a one-hot decode plus XOR
    aggregation; tables of wire vectors go through a mux tree.
    """
    if not table:
        raise InvalidInput("empty table")
    if isinstance(table[0], int):
        return select_public(b, table, one_hot(b, index_bits, len(table)))
    return select_private(b, table, index_bits)
