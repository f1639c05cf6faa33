"""AES-128 as a Boolean circuit.

SubBytes runs through a tower-field decomposition GF(2^8) ->
GF((2^4)^2) -> GF(((2^2)^2)^2) so that inversion costs 36 AND gates per
byte; every linear step (basis changes, squarings, constant mults, the
output affine, ShiftRows, MixColumns, AddRoundKey) is free XOR.  The
basis-change matrices are derived numerically at import time from a root
of the AES field polynomial inside the tower, rather than transcribed.

Bit conventions: a byte is 8 wires LSB-first (wire k = coefficient of
x^k); a block is 16 bytes in AES order.
"""

from __future__ import annotations

from .builder import CONST0, CircuitBuilder
from . import gadgets as g

# Numeric tower arithmetic used only to derive constants:
#   GF4  = GF2[z]/(z^2+z+1), elements 0..3
#   GF16 = GF4[u]/(u^2+u+MU), elements (h<<2)|l
#   GF256 = GF16[v]/(v^2+v+LAM), elements (H<<4)|L

_MU = 2  # z


def _gf4_mul_n(a, b):
    a0, a1 = a & 1, a >> 1
    b0, b1 = b & 1, b >> 1
    t = (a0 ^ a1) & (b0 ^ b1)
    p = a0 & b0
    q = a1 & b1
    return (p ^ q) | ((t ^ p) << 1)


def _gf16_mul_n(a, b):
    al, ah = a & 3, a >> 2
    bl, bh = b & 3, b >> 2
    hh = _gf4_mul_n(ah, bh)
    ll = _gf4_mul_n(al, bl)
    t = _gf4_mul_n(ah ^ al, bh ^ bl)
    return ((t ^ ll) << 2) | (ll ^ _gf4_mul_n(hh, _MU))


def _pick_lambda():
    # u^2+u+lam is irreducible over GF16 iff lam is outside {h^2+h}
    image = {(_gf16_mul_n(h, h) ^ h) for h in range(16)}
    for lam in range(1, 16):
        if lam not in image:
            return lam
    raise AssertionError("no irreducible extension of GF16")


_LAM = _pick_lambda()


def _gf256_mul_n(a, b):
    al, ah = a & 15, a >> 4
    bl, bh = b & 15, b >> 4
    hh = _gf16_mul_n(ah, bh)
    ll = _gf16_mul_n(al, bl)
    t = _gf16_mul_n(ah ^ al, bh ^ bl)
    return ((t ^ ll) << 4) | (ll ^ _gf16_mul_n(hh, _LAM))


def _find_aes_root():
    """Smallest tower element that is a root of x^8+x^4+x^3+x+1."""
    roots = []
    for cand in range(2, 256):
        powers = [1]
        for _ in range(8):
            powers.append(_gf256_mul_n(powers[-1], cand))
        if powers[8] ^ powers[4] ^ powers[3] ^ cand ^ 1 == 0:
            roots.append(cand)
    return min(roots)


def _mat_from_columns(cols):
    """8x8 GF(2) matrix as row bitmasks, column i = cols[i]."""
    rows = [0] * 8
    for i, col in enumerate(cols):
        for j in range(8):
            if (col >> j) & 1:
                rows[j] |= 1 << i
    return rows


def _mat_apply(rows, x):
    out = 0
    for j, row in enumerate(rows):
        if bin(row & x).count("1") & 1:
            out |= 1 << j
    return out


def _mat_invert(rows):
    n = len(rows)
    aug = [rows[i] | (1 << (n + i)) for i in range(n)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if (aug[r] >> col) & 1)
        aug[col], aug[pivot] = aug[pivot], aug[col]
        for r in range(n):
            if r != col and (aug[r] >> col) & 1:
                aug[r] ^= aug[col]
    return [row >> n for row in aug]


def _mat_mul(a, b):
    cols = [_mat_apply(a, _mat_apply(b, 1 << i)) for i in range(8)]
    return _mat_from_columns(cols)


def _affine_matrix():
    # circulant from the S-box affine step y_j = x_j ^ x_j+4 ^ ... ^ x_j+7
    cols = []
    for i in range(8):
        x = 1 << i
        y = 0
        for j in range(8):
            bit = ((x >> j) ^ (x >> ((j + 4) % 8)) ^ (x >> ((j + 5) % 8))
                   ^ (x >> ((j + 6) % 8)) ^ (x >> ((j + 7) % 8))) & 1
            y |= bit << j
        cols.append(y)
    return _mat_from_columns(cols)


_ROOT = _find_aes_root()
_cols = [1]
for _ in range(7):
    _cols.append(_gf256_mul_n(_cols[-1], _ROOT))
_TO_TOWER = _mat_from_columns(_cols)
_FROM_TOWER = _mat_invert(_TO_TOWER)
_OUT_MAP = _mat_mul(_affine_matrix(), _FROM_TOWER)
_SBOX_CONST = g.const_vec(0x63, 8)

RCON = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36]


def _matvec(b, rows, bits):
    return [g.xor_reduce(b, [bits[i] for i in range(8) if (row >> i) & 1])
            for row in rows]


def _gf4_mul(b, x, y):
    t = b.and_(b.xor(x[0], x[1]), b.xor(y[0], y[1]))
    p = b.and_(x[0], y[0])
    q = b.and_(x[1], y[1])
    return [b.xor(p, q), b.xor(t, p)]


def _gf4_square(b, x):
    # Frobenius is linear: (a1 z + a0)^2 = a1 z + (a0 + a1)
    return [b.xor(x[0], x[1]), x[1]]


def _gf4_mul_const(b, x, c):
    if c == 0:
        return [CONST0, CONST0]
    if c == 1:
        return list(x)
    if c == 2:  # z
        return [x[1], b.xor(x[0], x[1])]
    return [b.xor(x[0], x[1]), x[0]]  # z + 1


def _xor_vec(b, xs, ys):
    return [b.xor(x, y) for x, y in zip(xs, ys)]


def _gf16_mul(b, x, y):
    xl, xh = x[:2], x[2:]
    yl, yh = y[:2], y[2:]
    hh = _gf4_mul(b, xh, yh)
    ll = _gf4_mul(b, xl, yl)
    t = _gf4_mul(b, _xor_vec(b, xh, xl), _xor_vec(b, yh, yl))
    lo = _xor_vec(b, ll, _gf4_mul_const(b, hh, _MU))
    hi = _xor_vec(b, t, ll)
    return lo + hi


def _gf16_inv(b, x):
    xl, xh = x[:2], x[2:]
    hmu = _gf4_mul_const(b, _gf4_square(b, xh), _MU)
    cross = _gf4_mul(b, xh, xl)
    lsq = _gf4_square(b, xl)
    d = _xor_vec(b, _xor_vec(b, hmu, cross), lsq)
    dinv = _gf4_square(b, d)  # x^-1 = x^2 in GF4
    out_h = _gf4_mul(b, xh, dinv)
    out_l = _gf4_mul(b, _xor_vec(b, xh, xl), dinv)
    return out_l + out_h


def _gf16_linear(b, x, cols):
    return [g.xor_reduce(b, [x[i] for i in range(4) if (cols[i] >> j) & 1])
            for j in range(4)]


_SQ_COLS = [_gf16_mul_n(1 << i, 1 << i) for i in range(4)]
_SQLAM_COLS = [_gf16_mul_n(c, _LAM) for c in _SQ_COLS]


def _gf256_inv(b, t):
    lo, hi = t[:4], t[4:]
    hsq_lam = _gf16_linear(b, hi, _SQLAM_COLS)
    cross = _gf16_mul(b, hi, lo)
    lsq = _gf16_linear(b, lo, _SQ_COLS)
    delta = _xor_vec(b, _xor_vec(b, hsq_lam, cross), lsq)
    dinv = _gf16_inv(b, delta)
    out_h = _gf16_mul(b, hi, dinv)
    out_l = _gf16_mul(b, _xor_vec(b, hi, lo), dinv)
    return out_l + out_h


def emit_sbox(b, byte_bits):
    """SubBytes on one byte: 36 AND gates, everything else free."""
    t = _matvec(b, _TO_TOWER, byte_bits)
    inv = _gf256_inv(b, t)
    y = _matvec(b, _OUT_MAP, inv)
    return _xor_vec(b, y, _SBOX_CONST)


def _xtime(b, byte):
    # multiply by x: shift up, fold bit 7 back through 0x1b
    out = [CONST0] + byte[:7]
    for pos in (0, 1, 3, 4):
        out[pos] = b.xor(out[pos], byte[7])
    return out


def emit_key_schedule(b, key_bits):
    """40 S-boxes; returns 11 round keys as lists of 16 bytes."""
    words = [[key_bits[32 * w + 8 * k:32 * w + 8 * k + 8] for k in range(4)]
             for w in range(4)]
    for i in range(4, 44):
        prev = words[i - 1]
        if i % 4 == 0:
            rotated = [prev[1], prev[2], prev[3], prev[0]]
            temp = [emit_sbox(b, byte) for byte in rotated]
            temp[0] = _xor_vec(b, temp[0], g.const_vec(RCON[i // 4 - 1], 8))
        else:
            temp = prev
        words.append([_xor_vec(b, words[i - 4][k], temp[k])
                      for k in range(4)])
    return [[byte for w in range(4) for byte in words[4 * rnd + w]]
            for rnd in range(11)]


def _shift_rows(state):
    # byte index r + 4c; row r rotates left by r columns
    return [state[r + 4 * ((c + r) % 4)] for c in range(4) for r in range(4)]


def _mix_columns(b, state):
    out = []
    for c in range(4):
        col = state[4 * c:4 * c + 4]
        dbl = [_xtime(b, byte) for byte in col]
        for r in range(4):
            t = _xor_vec(b, dbl[r], dbl[(r + 1) % 4])
            t = _xor_vec(b, t, col[(r + 1) % 4])
            t = _xor_vec(b, t, col[(r + 2) % 4])
            t = _xor_vec(b, t, col[(r + 3) % 4])
            out.append(t)
    return out


def emit_aes128_rounds(b, round_keys, pt_bits):
    """Cipher body over a precomputed key schedule; 128 wires in and out.

    Splitting the schedule out lets counter-mode callers pay its 40
    S-boxes once across many blocks.
    """
    state = [pt_bits[8 * i:8 * i + 8] for i in range(16)]
    state = [_xor_vec(b, state[i], round_keys[0][i]) for i in range(16)]
    for rnd in range(1, 10):
        state = [emit_sbox(b, byte) for byte in state]
        state = _shift_rows(state)
        state = _mix_columns(b, state)
        state = [_xor_vec(b, state[i], round_keys[rnd][i]) for i in range(16)]
    state = [emit_sbox(b, byte) for byte in state]
    state = _shift_rows(state)
    state = [_xor_vec(b, state[i], round_keys[10][i]) for i in range(16)]
    return [bit for byte in state for bit in byte]


def emit_aes128(b, key_bits, pt_bits):
    """Forward cipher: 128 key wires + 128 plaintext wires -> 128 out."""
    if len(key_bits) != 128 or len(pt_bits) != 128:
        raise ValueError("AES-128 wants 128 key and 128 plaintext wires")
    return emit_aes128_rounds(b, emit_key_schedule(b, key_bits), pt_bits)


def build_aes128_circuit():
    """Standalone cipher circuit: private key, separate plaintext input."""
    b = CircuitBuilder()
    key = b.add_input("garbler", "key", 128)
    pt = b.add_input("evaluator", "plaintext", 128)
    b.add_output("ciphertext", emit_aes128(b, key, pt))
    return b.build()
