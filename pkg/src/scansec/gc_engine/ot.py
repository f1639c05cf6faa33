"""Base oblivious transfer for evaluator input labels.

One transfer per choice bit, no OT extension.  The receiver sends an
ordered pair of Curve25519 public keys per bit, its real key at the
position of its choice bit and a dlog-free decoy at the other; the
sender replies with one ephemeral public key for the whole batch plus
both label ciphertexts per bit, and the receiver can open exactly the
chosen one.

Decoys are rejection-sampled u-coordinates of points on the curve, so a
transcript carries the same kind of field element at both positions and
nothing in it correlates with the choice bits.  The receiver never knows
a discrete log for the decoy, which is what denies it the other label.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import gmpy2
import numpy as np

from ..crypto import Prg, sha256, x25519_public, x25519_shared
from ..errors import ProtocolError
from .garbling import labels_from_bytes, labels_to_bytes

_P = (1 << 255) - 19
_A = 486662


def _sample_decoy(prg) -> bytes:
    """u-coordinate of a random curve point, sampled without its dlog."""
    while True:
        u = int.from_bytes(prg.tobytes(32), "little") & ((1 << 255) - 1)
        if u >= _P:
            continue
        v2 = (u * u * u + _A * u * u + u) % _P
        if gmpy2.legendre(v2, _P) >= 0:
            return u.to_bytes(32, "little")


def _pad(shared: bytes, index: int, side: int) -> bytes:
    return sha256(shared + index.to_bytes(4, "big") + bytes([side]))[:16]


@dataclass
class _ReceiverState:
    choices: np.ndarray
    secrets: list


def ot_receive_request(choices, prg=None) -> tuple[_ReceiverState, bytes]:
    choices = np.asarray(choices, dtype=np.uint8)
    if choices.ndim != 1 or not np.all(choices <= 1):
        raise ProtocolError("choices must be a vector of bits")
    if prg is None:
        prg = Prg(os.urandom(16))
    secrets = []
    msg = bytearray()
    for b in choices:
        sk = prg.tobytes(32)
        pk_pair = [_sample_decoy(prg), _sample_decoy(prg)]
        pk_pair[int(b)] = x25519_public(sk)
        secrets.append(sk)
        msg += pk_pair[0] + pk_pair[1]
    return _ReceiverState(choices=choices, secrets=secrets), bytes(msg)


def ot_send_response(pairs, request: bytes, prg=None) -> bytes:
    pairs = np.asarray(pairs)
    n = len(pairs)
    if pairs.shape != (n, 2, 2):
        raise ProtocolError("label pairs must have shape (n, 2, 2)")
    if len(request) != 64 * n:
        raise ProtocolError("OT request length mismatch")
    if prg is None:
        prg = Prg(os.urandom(16))
    eph_sk = prg.tobytes(32)
    msg = bytearray(x25519_public(eph_sk))
    for i in range(n):
        for side in (0, 1):
            pk = request[64 * i + 32 * side:64 * i + 32 * side + 32]
            try:
                shared = x25519_shared(eph_sk, pk)
            except ValueError as exc:
                raise ProtocolError("degenerate OT public key") from exc
            label = labels_to_bytes(pairs[i, side])
            pad = _pad(shared, i, side)
            msg += bytes(a ^ b for a, b in zip(label, pad))
    return bytes(msg)


def ot_receive_finish(state: _ReceiverState, response: bytes):
    n = len(state.choices)
    if len(response) != 32 + 32 * n:
        raise ProtocolError("OT response length mismatch")
    eph_pk = response[:32]
    out = np.empty((n, 2), dtype="<u8")
    for i, b in enumerate(state.choices):
        b = int(b)
        shared = x25519_shared(state.secrets[i], eph_pk)
        ct = response[32 + 32 * i + 16 * b:32 + 32 * i + 16 * b + 16]
        pad = _pad(shared, i, b)
        out[i] = labels_from_bytes(
            bytes(a ^ c for a, c in zip(ct, pad)), (2,))
    return out


def ot_transfer(pairs, choices, seed=None):
    """In-process OT round trip.  Returns (labels, (request, response))."""
    if seed is None:
        recv_prg = send_prg = None
    else:
        root = Prg(seed)
        recv_prg, send_prg = root.fork(b"recv"), root.fork(b"send")
    state, request = ot_receive_request(choices, recv_prg)
    response = ot_send_response(pairs, request, send_prg)
    return ot_receive_finish(state, response), (request, response)
