"""SHA-256 compression as a Boolean circuit.

Rotations and shifts are rewiring, so the nonlinear cost is the adders
plus one 32-AND Ch and one 32-AND Maj per round:

    Ch(e, f, g)  = g ^ (e & (f ^ g))
    Maj(a, b, c) = a ^ ((a ^ b) & (a ^ c))

A word is 32 wires LSB-first.  Message bytes enter big-endian per the
hash spec; bytes_to_words does the reordering.  Callers own padding:
sha256_pad gives the standard 0x80 / zeros / 64-bit length tail.
"""

from __future__ import annotations

import struct

from .builder import CONST0, CircuitBuilder
from . import gadgets as g

K = [
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5,
    0x3956C25B, 0x59F111F1, 0x923F82A4, 0xAB1C5ED5,
    0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3,
    0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174,
    0xE49B69C1, 0xEFBE4786, 0x0FC19DC6, 0x240CA1CC,
    0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7,
    0xC6E00BF3, 0xD5A79147, 0x06CA6351, 0x14292967,
    0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13,
    0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85,
    0xA2BFE8A1, 0xA81A664B, 0xC24B8B70, 0xC76C51A3,
    0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5,
    0x391C0CB3, 0x4ED8AA4A, 0x5B9CCA4F, 0x682E6FF3,
    0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208,
    0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
]

H0 = [
    0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
    0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19,
]


def _rotr(word, n):
    return [word[(i + n) % 32] for i in range(32)]


def _shr(word, n):
    return [word[i + n] if i + n < 32 else CONST0 for i in range(32)]


def _xor3(b, x, y, z):
    return [b.xor(b.xor(x[i], y[i]), z[i]) for i in range(32)]


def _add32(b, x, y):
    return g.add(b, x, y, 32)


def _ch(b, e, f, gg):
    return [b.xor(gg[i], b.and_(e[i], b.xor(f[i], gg[i])))
            for i in range(32)]


def _maj(b, a, bb, c):
    return [b.xor(a[i], b.and_(b.xor(a[i], bb[i]), b.xor(a[i], c[i])))
            for i in range(32)]


def emit_compression(b, state, block):
    """One compression: 8-word chaining state + 16-word block -> 8 words."""
    if len(state) != 8 or len(block) != 16:
        raise ValueError("state must be 8 words, block 16 words")
    w = list(block)
    for t in range(16, 64):
        s0 = _xor3(b, _rotr(w[t - 15], 7), _rotr(w[t - 15], 18),
                   _shr(w[t - 15], 3))
        s1 = _xor3(b, _rotr(w[t - 2], 17), _rotr(w[t - 2], 19),
                   _shr(w[t - 2], 10))
        w.append(_add32(b, _add32(b, s1, w[t - 7]),
                        _add32(b, s0, w[t - 16])))
    a, bb, c, d, e, f, gg, h = state
    for t in range(64):
        big1 = _xor3(b, _rotr(e, 6), _rotr(e, 11), _rotr(e, 25))
        t1 = _add32(b, _add32(b, h, big1),
                    _add32(b, _ch(b, e, f, gg),
                           _add32(b, g.const_vec(K[t], 32), w[t])))
        big0 = _xor3(b, _rotr(a, 2), _rotr(a, 13), _rotr(a, 22))
        t2 = _add32(b, big0, _maj(b, a, bb, c))
        h = gg
        gg = f
        f = e
        e = _add32(b, d, t1)
        d = c
        c = bb
        bb = a
        a = _add32(b, t1, t2)
    regs = [a, bb, c, d, e, f, gg, h]
    return [_add32(b, state[i], regs[i]) for i in range(8)]


def const_bytes(data):
    """Byte string to a list of constant wire bytes."""
    return [g.const_vec(v, 8) for v in data]


def bytes_to_words(byte_list):
    """Group wire bytes big-endian into 32-bit words, LSB-first bits."""
    if len(byte_list) % 4:
        raise ValueError("byte count must be a multiple of 4")
    words = []
    for j in range(0, len(byte_list), 4):
        b0, b1, b2, b3 = byte_list[j:j + 4]
        words.append(list(b3) + list(b2) + list(b1) + list(b0))
    return words


def words_to_bytes(words):
    """Inverse of bytes_to_words: big-endian byte order per word."""
    out = []
    for word in words:
        out.extend([word[24:32], word[16:24], word[8:16], word[0:8]])
    return out


def sha256_pad(msg_len):
    """Padding byte string for a message of msg_len bytes."""
    k = (55 - msg_len) % 64
    return b"\x80" + b"\x00" * k + struct.pack(">Q", msg_len * 8)


def emit_sha256(b, msg_bytes):
    """Full hash of a fixed-length wire-byte message; 32 wire bytes out."""
    padded = list(msg_bytes) + const_bytes(sha256_pad(len(msg_bytes)))
    state = [g.const_vec(h, 32) for h in H0]
    for off in range(0, len(padded), 64):
        block = bytes_to_words(padded[off:off + 64])
        state = emit_compression(b, state, block)
    return words_to_bytes(state)


def compression_count(msg_len):
    """How many compressions emit_sha256 spends on msg_len bytes."""
    return (msg_len + len(sha256_pad(msg_len))) // 64


def _xor_const_byte(b, byte, c):
    return [b.inv(w) if (c >> k) & 1 else w for k, w in enumerate(byte)]


def emit_hmac_sha256(b, key_bytes, msg_bytes):
    """HMAC over wire bytes.  Keys longer than one block are unsupported."""
    if len(key_bytes) > 64:
        raise ValueError("HMAC wire keys beyond one block not supported")
    key = list(key_bytes) + const_bytes(b"\x00" * (64 - len(key_bytes)))
    inner = emit_sha256(b, [_xor_const_byte(b, kb, 0x36) for kb in key]
                        + list(msg_bytes))
    return emit_sha256(b, [_xor_const_byte(b, kb, 0x5C) for kb in key]
                       + inner)


def build_compression_circuit():
    """Standalone compression: chaining state and block as flat inputs."""
    b = CircuitBuilder()
    state_bits = b.add_input("garbler", "state", 256)
    block_bits = b.add_input("evaluator", "block", 512)
    state = [state_bits[32 * i:32 * i + 32] for i in range(8)]
    block = [block_bits[32 * i:32 * i + 32] for i in range(16)]
    out = emit_compression(b, state, block)
    b.add_output("state_out", [bit for word in out for bit in word])
    return b.build()
