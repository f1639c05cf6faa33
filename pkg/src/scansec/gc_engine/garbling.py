"""Half-gates garbling over the circuit IR.

Labels are 128-bit tokens held as (.., 2) little-endian uint64 arrays; the
permute bit is the least significant bit and the free-XOR offset R has
lsb(R) = 1, so lsb(label) doubles as the point-and-permute select bit.

Gate hashing is the standard fixed-key construction H(x, t) =
AES_k(x ^ t) ^ (x ^ t) with the 2-per-AND tweak t derived from the gate's
position in the table stream.  Whole depth levels are hashed in one AES
call, which is what makes the engine fast enough for circuits with
millions of gates on one core.

Per AND gate at table position i, with input zero-labels ka0, kb0,
permute bits pa, pb and tweaks j = 2i, j' = 2i + 1:

    T_G  = H(ka0, j) ^ H(ka0 ^ R, j) ^ pb R
    W_G0 = H(ka0, j) ^ pa T_G
    T_E  = H(kb0, j') ^ H(kb0 ^ R, j') ^ ka0
    W_E0 = H(kb0, j') ^ pb (T_E ^ ka0)

and the output zero-label is W_G0 ^ W_E0; (T_G, T_E) is the 32-byte
table.  The evaluator, holding labels ka, kb with select bits sa, sb,
computes H(ka, j) ^ sa T_G ^ H(kb, j') ^ sb (T_E ^ ka).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from ..crypto import Prg
from ..errors import ProtocolError

_U64 = np.dtype("<u8")
_FIXED_KEY = b"scansec-fixedkey"
_local = threading.local()


def _ecb():
    enc = getattr(_local, "enc", None)
    if enc is None:
        enc = Cipher(algorithms.AES(_FIXED_KEY), modes.ECB()).encryptor()
        _local.enc = enc
    return enc


def _hash_blocks(x):
    """H(x) = AES_k(x) ^ x over an (n, 2) uint64 block array."""
    flat = np.ascontiguousarray(x)
    out = np.frombuffer(_ecb().update(flat.tobytes()), dtype=_U64)
    return out.reshape(x.shape) ^ x


def labels_to_bytes(labels) -> bytes:
    return np.ascontiguousarray(labels, dtype=_U64).tobytes()


def labels_from_bytes(data: bytes, shape):
    arr = np.frombuffer(data, dtype=_U64)
    return arr.reshape(shape).copy()


@dataclass
class GarbledCircuit:
    circuit_hash: bytes
    tables: np.ndarray          # (and_count, 2, 2) uint64: T_G, T_E
    output_decode: dict         # name -> permute bits of the zero-labels
    tweak_base: int = 0

    @property
    def table_bytes(self) -> int:
        return int(self.tables.nbytes)


def _draw_labels(prg, n):
    return np.frombuffer(prg.tobytes(16 * n), dtype=_U64).reshape(n, 2).copy()


def _garble_internal(circuit, rng_seed, reuse=None, tweak_base=0):
    """Garbler-side pass.  Returns (R, zero_labels, tables, decode)."""
    prg = Prg(rng_seed)
    r = _draw_labels(prg, 1)[0]
    r[0] |= np.uint64(1)
    k0 = np.empty((circuit.n_wires, 2), dtype=_U64)
    k0[:circuit.n_inputs] = _draw_labels(prg, circuit.n_inputs)
    if reuse is not None:
        r = np.asarray(reuse[0], dtype=_U64).copy()
        if not r[0] & np.uint64(1):
            raise ProtocolError("reused offset must have lsb 1")
        for key, labels in reuse[1].items():
            wires = circuit.input_map.get(key)
            if wires is None or len(wires) != len(labels):
                raise ProtocolError(f"bad label reuse for {key}")
            k0[wires] = labels

    tables = np.empty((circuit.stats.and_count, 2, 2), dtype=_U64)
    base = np.uint64(tweak_base)
    for lv in circuit.schedule():
        if len(lv.xor_dst):
            k0[lv.xor_dst] = k0[lv.xor_a] ^ k0[lv.xor_b]
        if len(lv.inv_dst):
            k0[lv.inv_dst] = k0[lv.inv_a] ^ r
        n = len(lv.and_dst)
        if n:
            ka0 = k0[lv.and_a]
            kb0 = k0[lv.and_b]
            tw = base + (2 * lv.and_tbl).astype(np.uint64)
            blocks = np.concatenate([ka0, ka0 ^ r, kb0, kb0 ^ r])
            blocks[:, 0] ^= np.concatenate([tw, tw, tw + np.uint64(1),
                                            tw + np.uint64(1)])
            h = _hash_blocks(blocks)
            ha0, ha1, hb0, hb1 = h[:n], h[n:2 * n], h[2 * n:3 * n], h[3 * n:]
            pa = (ka0[:, 0] & np.uint64(1)).astype(bool)
            pb = (kb0[:, 0] & np.uint64(1)).astype(bool)
            tg = ha0 ^ ha1
            tg[pb] ^= r
            wg0 = ha0
            wg0[pa] ^= tg[pa]
            te = hb0 ^ hb1 ^ ka0
            we0 = hb0
            we0[pb] ^= (te ^ ka0)[pb]
            k0[lv.and_dst] = wg0 ^ we0
            tables[lv.and_tbl, 0] = tg
            tables[lv.and_tbl, 1] = te

    decode = {name: (k0[wires, 0] & np.uint64(1)).astype(np.uint8)
              for name, wires in circuit.output_map.items()}
    return r, k0, tables, decode


def garble(circuit, garbler_inputs, rng_seed, *, reuse=None, tweak_base=0):
    """Garble a circuit and encode the garbler's own inputs.

    garbler_inputs must carry a bit vector for every non-evaluator input
    key of the circuit; evaluator-party wires come back as label pairs
    for the OT step.  Deterministic in rng_seed.

    reuse=(offset, {key: zero_labels}) grafts another circuit's output
    labels onto input wires, composing circuits without decoding; those
    keys carry values nobody knows, so no bits are expected for them.
    """
    reuse_keys = set(reuse[1]) if reuse is not None else set()
    garbler_keys = {k for k in circuit.input_map
                    if k[0] != "evaluator"} - reuse_keys
    if set(garbler_inputs) != garbler_keys:
        raise ProtocolError(
            f"garbler inputs {sorted(garbler_inputs)} do not cover "
            f"{sorted(garbler_keys)}")

    r, k0, tables, decode = _garble_internal(circuit, rng_seed, reuse,
                                             tweak_base)
    own_labels = {}
    for key in garbler_keys:
        wires = circuit.input_map[key]
        bits = np.asarray(garbler_inputs[key], dtype=np.uint8)
        if bits.shape != (len(wires),):
            raise ProtocolError(f"input {key} expects {len(wires)} bits")
        own_labels[key] = k0[wires] ^ np.where(bits[:, None].astype(bool),
                                               r, np.uint64(0))
    pairs = {}
    for key in circuit.input_map:
        if key[0] == "evaluator" and key not in reuse_keys:
            w = circuit.input_map[key]
            pairs[key] = np.stack([k0[w], k0[w] ^ r], axis=1)
    gc = GarbledCircuit(circuit_hash=circuit.structural_hash(),
                        tables=tables, output_decode=decode,
                        tweak_base=tweak_base)
    return gc, own_labels, pairs, decode


def _check_eval_args(gc, circuit, input_labels):
    if gc.circuit_hash != circuit.structural_hash():
        raise ProtocolError("garbled circuit does not match this circuit")
    if gc.tables.shape != (circuit.stats.and_count, 2, 2):
        raise ProtocolError("malformed garbled tables")
    missing = set(circuit.input_map) - set(input_labels)
    if missing:
        raise ProtocolError(f"missing input labels {sorted(missing)}")


def evaluate(gc, circuit, input_labels):
    """Evaluator-side pass over active labels.  Returns output labels."""
    _check_eval_args(gc, circuit, input_labels)
    lab = np.empty((circuit.n_wires, 2), dtype=_U64)
    for key, wires in circuit.input_map.items():
        arr = np.asarray(input_labels[key], dtype=_U64)
        if arr.shape != (len(wires), 2):
            raise ProtocolError(f"labels for {key} expect {len(wires)} wires")
        lab[wires] = arr

    base = np.uint64(gc.tweak_base)
    tables = gc.tables
    for lv in circuit.schedule():
        if len(lv.xor_dst):
            lab[lv.xor_dst] = lab[lv.xor_a] ^ lab[lv.xor_b]
        if len(lv.inv_dst):
            lab[lv.inv_dst] = lab[lv.inv_a]
        n = len(lv.and_dst)
        if n:
            ka = lab[lv.and_a]
            kb = lab[lv.and_b]
            tw = base + (2 * lv.and_tbl).astype(np.uint64)
            blocks = np.concatenate([ka, kb])
            blocks[:, 0] ^= np.concatenate([tw, tw + np.uint64(1)])
            h = _hash_blocks(blocks)
            hga, hgb = h[:n], h[n:]
            sa = (ka[:, 0] & np.uint64(1)).astype(bool)
            sb = (kb[:, 0] & np.uint64(1)).astype(bool)
            tg = tables[lv.and_tbl, 0]
            te = tables[lv.and_tbl, 1]
            wg = hga
            wg[sa] ^= tg[sa]
            we = hgb
            we[sb] ^= (te ^ ka)[sb]
            lab[lv.and_dst] = wg ^ we
    return {name: lab[wires].copy()
            for name, wires in circuit.output_map.items()}


def batch_evaluate(gc, circuit, input_labels):
    """Evaluate many label assignments at once.

    input_labels maps keys to (batch, width, 2) arrays; one extra batch
    axis relative to evaluate().  Used for exhaustive engine tests.
    """
    _check_eval_args(gc, circuit, input_labels)
    batch = next(iter(input_labels.values())).shape[0]
    lab = np.empty((circuit.n_wires, batch, 2), dtype=_U64)
    for key, wires in circuit.input_map.items():
        arr = np.asarray(input_labels[key], dtype=_U64)
        if arr.shape != (batch, len(wires), 2):
            raise ProtocolError(f"labels for {key} expect "
                                f"({batch}, {len(wires)}, 2)")
        lab[wires] = arr.transpose(1, 0, 2)

    base = np.uint64(gc.tweak_base)
    tables = gc.tables
    one = np.uint64(1)
    for lv in circuit.schedule():
        if len(lv.xor_dst):
            lab[lv.xor_dst] = lab[lv.xor_a] ^ lab[lv.xor_b]
        if len(lv.inv_dst):
            lab[lv.inv_dst] = lab[lv.inv_a]
        n = len(lv.and_dst)
        if n:
            ka = lab[lv.and_a]            # (n, batch, 2)
            kb = lab[lv.and_b]
            tw = base + (2 * lv.and_tbl).astype(np.uint64)
            blocks = np.concatenate([ka, kb]).reshape(-1, 2).copy()
            tww = np.concatenate([tw, tw + one])
            blocks[:, 0] ^= np.repeat(tww, batch)
            h = _hash_blocks(blocks).reshape(2 * n, batch, 2)
            hga, hgb = h[:n], h[n:]
            sa = (ka[..., 0] & one).astype(bool)
            sb = (kb[..., 0] & one).astype(bool)
            tg = tables[lv.and_tbl, 0][:, None, :]
            te = tables[lv.and_tbl, 1][:, None, :]
            wg = hga ^ np.where(sa[..., None], tg, np.uint64(0))
            we = hgb ^ np.where(sb[..., None], te ^ ka, np.uint64(0))
            lab[lv.and_dst] = wg ^ we
    return {name: lab[wires].transpose(1, 0, 2).copy()
            for name, wires in circuit.output_map.items()}


def decode_outputs(output_decode, output_labels):
    """Permute-bit decode of output labels to cleartext bits."""
    out = {}
    for name, labels in output_labels.items():
        bits = output_decode.get(name)
        if bits is None:
            raise ProtocolError(f"no decode entry for output {name!r}")
        active = (np.asarray(labels, dtype=_U64)[..., 0] & np.uint64(1))
        out[name] = (active.astype(np.uint8) ^ bits)
    return out
