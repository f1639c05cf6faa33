"""Two-party comparison sessions, direct and server-assisted.

Direct mode garbles one comparison circuit between two data holders.
Server-assisted mode composes integrity checking, key reconstruction,
AES-CTR decryption, and the comparison into a single circuit: the
server feeds its mask share R and the stored CT / HEADER / T, and the
client feeds its unwrapped masked key M, its own copy of the
ciphertext, the ciphertext digest d' and the query.  The circuit
recomputes K = R xor M, derives the MAC key, verifies the record tag
and the bytewise equality of the two ciphertext copies, decrypts, and
compares.  When any check fails every score wire is forced to zero and
a separate failure bit is raised, so a tampered record can never decode
to a plausible score.

Only final score wires and the failure bit ever get decode bits; all
intermediate values stay as opaque labels.

Message flow, client/evaluator first:

    HELLO ->        (algorithm, params digest, item count, identity)
    <- HELLO/RECORD
    OT_MSG ->       (label request for every evaluator input bit)
    <- GC_STREAM    (meta, then fixed-size table chunks)
    <- OT_MSG
    OUTPUT ->       (decoded result bits; evaluate mode: failure bit)

Transcript shape depends only on algorithm parameters and item counts,
never on data values.
"""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from . import crypto, storage, transport
from .circuits import aes, gadgets as g, multimatch, scanmatch, sha256, subsmatch
from .circuits.builder import CircuitBuilder
from .errors import (AuthError, InvalidInput, ParamsMismatch, ProtocolError,
                     TransportError)
from .fixedpoint import from_unsigned
from .gc_engine.garbling import (GarbledCircuit, decode_outputs, evaluate,
                                 garble, labels_from_bytes, labels_to_bytes)
from .gc_engine.ot import (ot_receive_finish, ot_receive_request,
                           ot_send_response)
from .reference import SubstitutionMatrix
from .storage import HEADER_LEN, PK_LEN, TAG_LEN, WRAP_LEN, Header
from .transport import (ABORT_AUTH, ABORT_INTEGRITY, ABORT_PARAMS, GC_STREAM,
                        HELLO, OT_MSG, OUTPUT, RECORD, PeerAbort)

_HELLO_MAGIC = b"SPH1"
_GC_MAGIC = b"SPG1"
_MODE_COMPARE = 1
_MODE_EVALUATE = 2
_CHUNK = 1 << 20


def bits_from_bytes(data: bytes) -> np.ndarray:
    """Bytes to wire bits, LSB first within each byte."""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8),
                         bitorder="little")


def bytes_from_bits(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8),
                       bitorder="little").tobytes()


def _int_from_bits(bits) -> int:
    return sum(int(v) << k for k, v in enumerate(bits))


def _words_to_bits(words, width: int) -> np.ndarray:
    out = np.empty(width * len(words), dtype=np.uint8)
    for i, v in enumerate(words):
        for k in range(width):
            out[width * i + k] = (int(v) >> k) & 1
    return out


# -------------------------------------------------------------- parameters

@dataclass(frozen=True)
class AlgoParams:
    """Everything both parties must agree on before garbling."""

    algo: str
    matrix: SubstitutionMatrix | None = None
    alphabet: int = 0
    ngram: int = 0

    def __post_init__(self):
        if self.algo not in storage.ALGO_TAGS:
            raise InvalidInput(f"unknown algorithm {self.algo!r}")
        if self.algo == "scanmatch" and self.matrix is None:
            raise InvalidInput("scanmatch needs a substitution matrix")
        if self.algo == "subsmatch" and (self.alphabet < 2 or self.ngram < 1):
            raise InvalidInput("subsmatch needs alphabet >= 2 and ngram >= 1")

    @property
    def tag(self) -> int:
        return storage.ALGO_TAGS[self.algo]

    @property
    def dimension(self) -> int:
        return self.alphabet ** self.ngram

    def digest(self) -> bytes:
        if self.algo == "scanmatch":
            return storage.params_digest("scanmatch", self.matrix)
        if self.algo == "subsmatch":
            return storage.params_digest("subsmatch",
                                         (self.alphabet, self.ngram))
        return storage.params_digest("multimatch", None)


def items_to_bits(params: AlgoParams, items) -> np.ndarray:
    """Preprocessed items to the comparison circuit's input layout."""
    if params.algo == "scanmatch":
        return scanmatch.symbols_to_bits(items, params.matrix.size)
    if params.algo == "multimatch":
        return multimatch.saccades_to_bits(items)
    words = np.asarray(items, dtype=np.int64)
    if len(words) != params.dimension:
        raise InvalidInput("frequency vector length disagrees with params")
    return _words_to_bits(words, subsmatch.WORD)


def items_to_payload(params: AlgoParams, items) -> bytes:
    """Preprocessed items to the stored-record byte serialization."""
    if params.algo == "scanmatch":
        if params.matrix.size > 256:
            raise InvalidInput("matrix too large for one-byte symbols")
        return storage.encode_symbol_payload(items)
    if params.algo == "multimatch":
        return storage.encode_saccade_payload(items)
    if len(np.asarray(items)) != params.dimension:
        raise InvalidInput("frequency vector length disagrees with params")
    return storage.encode_frequency_payload(items)


def item_count(params: AlgoParams, items) -> int:
    return len(np.asarray(items))


def _stored_count(params: AlgoParams, payload_len: int) -> int:
    if params.algo == "scanmatch":
        return payload_len
    if params.algo == "multimatch":
        return payload_len // 16
    return payload_len // 2


def _check_payload_shape(params: AlgoParams, payload_len: int):
    if payload_len < 1:
        raise InvalidInput("empty payload")
    if params.algo == "multimatch" and payload_len % 16:
        raise InvalidInput("multimatch payload must be 16 bytes per saccade")
    if params.algo == "subsmatch" and payload_len != 2 * params.dimension:
        raise InvalidInput("subsmatch payload length disagrees with params")


# ---------------------------------------------------------------- circuits

def build_compare_circuit(params: AlgoParams, count_a: int, count_b: int):
    if params.algo == "scanmatch":
        return scanmatch.build_scanmatch_circuit(count_a, count_b,
                                                 params.matrix)
    if params.algo == "multimatch":
        return multimatch.build_multimatch_circuit(count_a, count_b)
    if count_a != params.dimension or count_b != params.dimension:
        raise InvalidInput("frequency vector length disagrees with params")
    return subsmatch.build_subsmatch_circuit(params.dimension)


def _to_wire_bytes(flat):
    return [flat[8 * i:8 * i + 8] for i in range(len(flat) // 8)]


def _payload_to_algo_bits(params: AlgoParams, plain):
    """Rewire decrypted payload bytes into the comparison input layout."""
    if params.algo == "scanmatch":
        sw = scanmatch.symbol_width(params.matrix.size)
        return [w for byte in _to_wire_bytes(plain) for w in byte[:sw]]
    # both word algorithms store 16-bit big-endian words
    out = []
    for w in range(len(plain) // 16):
        out.extend(plain[8 * (2 * w + 1):8 * (2 * w + 1) + 8])
        out.extend(plain[8 * 2 * w:8 * 2 * w + 8])
    return out


# The MAC key hash covers K || "MAC" || IV (35 bytes -> one compression);
# the tag covers HEADER || d' (90 bytes -> 3 inner + 2 outer).  These
# counts are structural constants of the record format.
_KMAC_MSG_LEN = 16 + len(crypto.MAC_LABEL) + 16
_HMAC_COMPRESSIONS = (sha256.compression_count(64 + HEADER_LEN + 32)
                      + sha256.compression_count(64 + 32))
assert sha256.compression_count(_KMAC_MSG_LEN) == 1
assert _HMAC_COMPRESSIONS == 5


def build_session_circuit(params: AlgoParams, payload_len: int,
                          query_count: int):
    """Compose integrity check, decryption, and comparison.

    Garbler inputs: mask_r, ct_server, header, tag.  Evaluator inputs:
    masked_key, ct_client, ct_digest, query.  Outputs: the comparison
    scores masked to zero unless every check passed, plus "fail".
    """
    _check_payload_shape(params, payload_len)
    b = CircuitBuilder()
    r_in = b.add_input("garbler", "mask_r", 128)
    ct_s = b.add_input("garbler", "ct_server", 8 * payload_len)
    head = b.add_input("garbler", "header", 8 * HEADER_LEN)
    tag = b.add_input("garbler", "tag", 8 * TAG_LEN)
    m_in = b.add_input("evaluator", "masked_key", 128)
    ct_c = b.add_input("evaluator", "ct_client", 8 * payload_len)
    dig = b.add_input("evaluator", "ct_digest", 256)
    query = b.add_input("evaluator", "query",
                        _query_bits_len(params, query_count))

    k = [b.xor(x, y) for x, y in zip(r_in, m_in)]
    k_bytes = _to_wire_bytes(k)
    head_bytes = _to_wire_bytes(head)
    iv_bytes = head_bytes[5:21]

    k_mac = sha256.emit_sha256(
        b, k_bytes + sha256.const_bytes(crypto.MAC_LABEL) + iv_bytes)
    t_calc = sha256.emit_hmac_sha256(
        b, k_mac, head_bytes + _to_wire_bytes(dig))
    hmac_ok = g.equal(b, [w for byte in t_calc for w in byte], tag)
    ct_ok = g.equal(b, ct_s, ct_c)
    ok = b.and_(hmac_ok, ct_ok)

    round_keys = aes.emit_key_schedule(b, k)
    iv_le = [w for byte in reversed(iv_bytes) for w in byte]
    plain = []
    for i in range((payload_len + 15) // 16):
        ctr = iv_le if i == 0 else g.add(b, iv_le, g.const_vec(i, 128), 128)
        block_layout = [w for j in range(16)
                        for w in ctr[8 * (15 - j):8 * (15 - j) + 8]]
        ks = aes.emit_aes128_rounds(b, round_keys, block_layout)
        block = ct_s[128 * i:128 * i + 128]
        plain.extend(b.xor(c, s) for c, s in zip(block, ks))

    stored = _payload_to_algo_bits(params, plain)
    if params.algo == "scanmatch":
        outs = {"raw": scanmatch.emit_scanmatch(b, stored, query,
                                                params.matrix)}
    elif params.algo == "multimatch":
        outs = multimatch.emit_multimatch(b, stored, query)
    else:
        outs = {"similarity": subsmatch.emit_subsmatch(b, stored, query)}
    for name, bits in outs.items():
        b.add_output(name, [b.and_(v, ok) for v in bits])
    b.add_output("fail", [b.inv(ok)])
    return b.build()


def _query_bits_len(params: AlgoParams, count: int) -> int:
    if count < 1:
        raise InvalidInput("empty query")
    if params.algo == "scanmatch":
        return scanmatch.symbol_width(params.matrix.size) * count
    if params.algo == "multimatch":
        return multimatch.BLOCK * count
    if count != params.dimension:
        raise InvalidInput("frequency vector length disagrees with params")
    return subsmatch.WORD * count


# ------------------------------------------------------------------ scores

def interpret_scores(params: AlgoParams, bits_map, count_a: int,
                     count_b: int):
    """Decoded output bits to (raw ints, floats)."""
    raw = {}
    for name, bits in bits_map.items():
        if name == "fail":
            continue
        value = _int_from_bits(bits)
        if params.algo == "scanmatch":
            # the alignment score is two's complement
            value = from_unsigned(value, len(bits))
        raw[name] = value
    if params.algo == "scanmatch":
        scores = {"score": scanmatch.normalize_raw(raw["raw"],
                                                   params.matrix,
                                                   count_a, count_b)}
    elif params.algo == "multimatch":
        scores = multimatch.decode_scores(raw)
    else:
        scores = {"similarity": subsmatch.decode_similarity(
            raw["similarity"])}
    return raw, scores


@dataclass
class CompareResult:
    algo: str
    raw: dict
    scores: dict
    metrics: transport.SessionMetrics


@dataclass
class SessionOutcome:
    ok: bool
    algo: str
    raw: dict | None = None
    scores: dict | None = None
    reason: str = ""
    metrics: transport.SessionMetrics | None = None

    @property
    def bottom(self) -> bool:
        return not self.ok


@dataclass
class ServeReport:
    status: str  # ok | bottom | auth | params | error
    record_id: str = ""
    reason: str = ""
    metrics: transport.SessionMetrics | None = None


# ------------------------------------------------------------------ frames

def _pack_hello(mode: int, params: AlgoParams, count: int,
                record_id: str = "", cid: bytes = b"") -> bytes:
    out = _HELLO_MAGIC + bytes([mode, params.tag]) + params.digest()
    out += struct.pack(">I", count)
    if mode == _MODE_EVALUATE:
        out += bytes.fromhex(record_id) + cid
    return out


def _parse_hello(payload: bytes):
    if len(payload) < 42 or payload[:4] != _HELLO_MAGIC:
        raise ProtocolError("malformed HELLO")
    mode, tag = payload[4], payload[5]
    digest = payload[6:38]
    (count,) = struct.unpack(">I", payload[38:42])
    if mode == _MODE_EVALUATE:
        if len(payload) != 42 + 8 + 16:
            raise ProtocolError("malformed evaluate HELLO")
        return mode, tag, digest, count, payload[42:50].hex(), payload[50:66]
    if len(payload) != 42:
        raise ProtocolError("malformed compare HELLO")
    return mode, tag, digest, count, "", b""


def _pack_record_frame(record: storage.StorageRecord, e_blob: bytes) -> bytes:
    return record.header.pack() + record.tag + record.pk_a + e_blob + record.ct


def _parse_record_frame(payload: bytes):
    if len(payload) < HEADER_LEN + TAG_LEN + PK_LEN + WRAP_LEN:
        raise ProtocolError("record frame truncated")
    header = Header.unpack(payload[:HEADER_LEN])
    at = HEADER_LEN
    tag = payload[at:at + TAG_LEN]
    at += TAG_LEN
    pk_a = payload[at:at + PK_LEN]
    at += PK_LEN
    e_blob = payload[at:at + WRAP_LEN]
    at += WRAP_LEN
    ct = payload[at:]
    if len(ct) != header.payload_len:
        raise ProtocolError("record frame length disagrees with header")
    return header, tag, pk_a, e_blob, ct


def send_garbled(ch: transport.Channel, gc: GarbledCircuit, own_labels):
    meta = bytearray(_GC_MAGIC)
    meta += gc.circuit_hash
    meta += struct.pack(">QQ", gc.tweak_base, len(gc.tables))
    keys = sorted(own_labels)
    meta += struct.pack(">H", len(keys))
    for key in keys:
        name = f"{key[0]}/{key[1]}".encode()
        labels = own_labels[key]
        meta += struct.pack(">B", len(name)) + name
        meta += struct.pack(">I", len(labels)) + labels_to_bytes(labels)
    outs = sorted(gc.output_decode)
    meta += struct.pack(">H", len(outs))
    for name in outs:
        bits = np.asarray(gc.output_decode[name], dtype=np.uint8)
        nb = name.encode()
        meta += struct.pack(">B", len(nb)) + nb
        meta += struct.pack(">I", len(bits)) + bits.tobytes()
    body = gc.tables.reshape(-1).view(np.uint8)
    meta += struct.pack(">I", (body.size + _CHUNK - 1) // _CHUNK)
    ch.send(GC_STREAM, bytes(meta))
    for off in range(0, body.size, _CHUNK):
        ch.send(GC_STREAM, body[off:off + _CHUNK].tobytes())


def recv_garbled(ch: transport.Channel, circuit):
    meta = ch.recv_expect(GC_STREAM)
    if len(meta) < 4 + 32 + 16 + 2 or meta[:4] != _GC_MAGIC:
        raise ProtocolError("malformed garbled-circuit meta frame")
    circuit_hash = meta[4:36]
    if circuit_hash != circuit.structural_hash():
        raise ParamsMismatch(
            "peer garbled a different circuit; check algorithm parameters")
    tweak_base, and_count = struct.unpack(">QQ", meta[36:52])
    at = 52
    (n_keys,) = struct.unpack(">H", meta[at:at + 2])
    at += 2
    own_labels = {}
    for _ in range(n_keys):
        nlen = meta[at]
        at += 1
        party, _, name = meta[at:at + nlen].decode().partition("/")
        at += nlen
        (width,) = struct.unpack(">I", meta[at:at + 4])
        at += 4
        own_labels[(party, name)] = labels_from_bytes(
            meta[at:at + 16 * width], (width, 2))
        at += 16 * width
    (n_outs,) = struct.unpack(">H", meta[at:at + 2])
    at += 2
    decode = {}
    for _ in range(n_outs):
        nlen = meta[at]
        at += 1
        name = meta[at:at + nlen].decode()
        at += nlen
        (width,) = struct.unpack(">I", meta[at:at + 4])
        at += 4
        decode[name] = np.frombuffer(meta[at:at + width], dtype=np.uint8)
        at += width
    (n_chunks,) = struct.unpack(">I", meta[at:at + 4])
    chunks = [ch.recv_expect(GC_STREAM) for _ in range(n_chunks)]
    body = b"".join(chunks)
    if len(body) != 32 * and_count:
        raise ProtocolError("garbled table stream length mismatch")
    tables = np.frombuffer(body, dtype="<u8").reshape(and_count, 2, 2)
    gc = GarbledCircuit(circuit_hash=circuit_hash, tables=tables,
                        output_decode=decode, tweak_base=tweak_base)
    return gc, own_labels


def _pack_output(bits_map, order) -> bytes:
    out = bytearray()
    for name in order:
        out += bytes_from_bits(bits_map[name])
    return bytes(out)


def _parse_output(payload: bytes, circuit, order):
    out = {}
    at = 0
    for name in order:
        width = len(circuit.output_map[name])
        nbytes = (width + 7) // 8
        if at + nbytes > len(payload):
            raise ProtocolError("output frame truncated")
        out[name] = bits_from_bytes(payload[at:at + nbytes])[:width]
        at += nbytes
    if at != len(payload):
        raise ProtocolError("output frame has trailing bytes")
    return out


# ------------------------------------------------------------ OT plumbing

def _evaluator_keys(circuit):
    return sorted(k for k in circuit.input_map if k[0] == "evaluator")


def _ot_request(ch, circuit, choice_map, prg):
    keys = _evaluator_keys(circuit)
    choices = np.concatenate([np.asarray(choice_map[k], dtype=np.uint8)
                              for k in keys])
    state, request = ot_receive_request(choices, prg)
    ch.send(OT_MSG, request)
    return state, keys


def _ot_respond(ch, circuit, pairs, request, prg):
    keys = _evaluator_keys(circuit)
    stacked = np.concatenate([pairs[k] for k in keys])
    ch.send(OT_MSG, ot_send_response(stacked, request, prg))


def _ot_finish(state, keys, circuit, response):
    labels = ot_receive_finish(state, response)
    out = {}
    at = 0
    for key in keys:
        width = len(circuit.input_map[key])
        out[key] = labels[at:at + width]
        at += width
    return out


def _session_prg(seed, label: str):
    if seed is None:
        return crypto.Prg(os.urandom(16))
    prg = seed if isinstance(seed, crypto.Prg) else crypto.Prg(seed)
    return prg.fork(label.encode())


def _session_seed(seed, label: str) -> bytes:
    return _session_prg(seed, label).tobytes(16)


def _abort_and_raise(ch: transport.Channel, fn):
    """Run a protocol step; on our own failure, tell the peer first.

    A peer abort that carries a typed code is rethrown as the matching
    local error so both sides fail the same way.
    """
    try:
        return fn()
    except PeerAbort as exc:
        if exc.code == ABORT_PARAMS:
            raise ParamsMismatch(exc.reason) from exc
        if exc.code == transport.ABORT_AUTH:
            raise AuthError(exc.reason) from exc
        raise
    except TransportError:
        raise
    except ParamsMismatch as exc:
        ch.abort(ABORT_PARAMS, str(exc))
        raise
    except AuthError as exc:
        ch.abort(ABORT_AUTH, str(exc))
        raise
    except (InvalidInput, ProtocolError) as exc:
        ch.abort(transport.ABORT_INTERNAL, str(exc))
        raise


# ------------------------------------------------------------ direct mode

def run_compare_garbler(ch: transport.Channel, params: AlgoParams, items,
                        seed=None) -> CompareResult:
    """Garbler side of a direct comparison; items are this party's data."""
    return _abort_and_raise(
        ch, lambda: _compare_garbler(ch, params, items, seed))


def _compare_garbler(ch, params, items, seed):
    bits = items_to_bits(params, items)
    count = item_count(params, items)
    mode, tag, digest, their_count, _, _ = _parse_hello(
        ch.recv_expect(HELLO))
    if mode != _MODE_COMPARE or tag != params.tag or digest != params.digest():
        raise ParamsMismatch("peer requested different algorithm parameters")
    ch.send(HELLO, _pack_hello(_MODE_COMPARE, params, count))
    request = ch.recv_expect(OT_MSG)
    circuit = build_compare_circuit(params, count, their_count)
    key = next(k for k in circuit.input_map if k[0] == "garbler")
    gc, own, pairs, _ = garble(circuit, {key: bits},
                               _session_seed(seed, "garble"))
    send_garbled(ch, gc, own)
    _ot_respond(ch, circuit, pairs, request, _session_prg(seed, "ot"))
    order = sorted(circuit.output_map)
    bits_map = _parse_output(ch.recv_expect(OUTPUT), circuit, order)
    raw, scores = interpret_scores(params, bits_map, count, their_count)
    return CompareResult(params.algo, raw, scores, ch.metrics)


def run_compare_evaluator(ch: transport.Channel, params: AlgoParams, items,
                          seed=None) -> CompareResult:
    return _abort_and_raise(
        ch, lambda: _compare_evaluator(ch, params, items, seed))


def _compare_evaluator(ch, params, items, seed):
    bits = items_to_bits(params, items)
    count = item_count(params, items)
    ch.send(HELLO, _pack_hello(_MODE_COMPARE, params, count))
    mode, tag, digest, their_count, _, _ = _parse_hello(
        ch.recv_expect(HELLO))
    if mode != _MODE_COMPARE or tag != params.tag or digest != params.digest():
        raise ParamsMismatch("peer requested different algorithm parameters")
    circuit = build_compare_circuit(params, their_count, count)
    key = _evaluator_keys(circuit)[0]
    state, keys = _ot_request(ch, circuit, {key: bits},
                              _session_prg(seed, "ot-req"))
    gc, own_labels = recv_garbled(ch, circuit)
    labels = _ot_finish(state, keys, circuit,
                        ch.recv_expect(OT_MSG))
    out_labels = evaluate(gc, circuit, {**own_labels, **labels})
    bits_map = decode_outputs(gc.output_decode, out_labels)
    order = sorted(circuit.output_map)
    ch.send(OUTPUT, _pack_output(bits_map, order))
    raw, scores = interpret_scores(params, bits_map, their_count, count)
    return CompareResult(params.algo, raw, scores, ch.metrics)


# --------------------------------------------------------- assisted mode

def serve_session(ch: transport.Channel, store: storage.RecordStore,
                  params_map: dict, seed=None) -> ServeReport:
    """Answer one evaluation session on an accepted channel."""
    try:
        (mode, tag, digest, count, record_id,
         cid) = _parse_hello(ch.recv_expect(HELLO))
    except ProtocolError as exc:
        return ServeReport("error", reason=str(exc), metrics=ch.metrics)
    if mode != _MODE_EVALUATE:
        ch.abort(ABORT_PARAMS, "this endpoint serves stored records")
        return ServeReport("params", reason="wrong mode", metrics=ch.metrics)
    try:
        record = store.load(record_id)
    except InvalidInput:
        ch.abort(ABORT_AUTH, "unknown record")
        return ServeReport("auth", record_id, "unknown record", ch.metrics)
    except ProtocolError as exc:
        ch.abort(ABORT_INTEGRITY, "stored record is corrupt")
        return ServeReport("bottom", record_id, str(exc), ch.metrics)
    e_blob = record.wrapped.get(cid)
    if e_blob is None:
        ch.abort(ABORT_AUTH, "client not authorized for this record")
        return ServeReport("auth", record_id, "not authorized", ch.metrics)
    try:
        algo = record.header.algorithm
    except ProtocolError:
        ch.abort(ABORT_INTEGRITY, "stored record is corrupt")
        return ServeReport("bottom", record_id, "bad algorithm tag",
                           ch.metrics)
    params = params_map.get(algo)
    if params is None:
        ch.abort(ABORT_PARAMS, f"server lacks parameters for {algo}")
        return ServeReport("params", record_id, "no params", ch.metrics)
    try:
        ch.send(RECORD, _pack_record_frame(record, e_blob))
        request = ch.recv_expect(OT_MSG)
        circuit = build_session_circuit(params, record.header.payload_len,
                                        count)
        gc, own, pairs, _ = garble(circuit, {
            ("garbler", "mask_r"): bits_from_bytes(record.mask),
            ("garbler", "ct_server"): bits_from_bytes(record.ct),
            ("garbler", "header"): bits_from_bytes(record.header.pack()),
            ("garbler", "tag"): bits_from_bytes(record.tag),
        }, _session_seed(seed, "garble"))
        send_garbled(ch, gc, own)
        _ot_respond(ch, circuit, pairs, request, _session_prg(seed, "ot"))
        out = _parse_output(ch.recv_expect(OUTPUT), circuit, ["fail"])
    except PeerAbort as exc:
        status = {transport.ABORT_INTEGRITY: "bottom",
                  transport.ABORT_PARAMS: "params"}.get(exc.code, "error")
        return ServeReport(status, record_id, exc.reason, ch.metrics)
    except (InvalidInput, ProtocolError, TransportError) as exc:
        ch.abort(transport.ABORT_INTERNAL, str(exc))
        return ServeReport("error", record_id, str(exc), ch.metrics)
    if out["fail"][0]:
        return ServeReport("bottom", record_id,
                           "in-circuit integrity check failed", ch.metrics)
    return ServeReport("ok", record_id, metrics=ch.metrics)


def run_evaluate(ch: transport.Channel, record_id: str, sk_b: bytes,
                 pk_b: bytes, params: AlgoParams, items,
                 seed=None) -> SessionOutcome:
    """Client side of a server-assisted evaluation."""
    return _abort_and_raise(
        ch, lambda: _evaluate_client(ch, record_id, sk_b, pk_b, params,
                                     items, seed))


def _evaluate_client(ch, record_id, sk_b, pk_b, params, items, seed):
    query_bits = items_to_bits(params, items)
    count = item_count(params, items)
    cid = storage.client_id(pk_b)
    ch.send(HELLO, _pack_hello(_MODE_EVALUATE, params, count,
                               record_id, cid))

    def bottom(reason, notify=True):
        if notify:
            ch.abort(ABORT_INTEGRITY, reason)
        return SessionOutcome(False, params.algo, reason=reason,
                              metrics=ch.metrics)

    try:
        frame = ch.recv_expect(RECORD)
    except PeerAbort as exc:
        if exc.code == ABORT_AUTH:
            raise AuthError(exc.reason) from exc
        if exc.code == ABORT_INTEGRITY:
            return bottom(exc.reason, notify=False)
        if exc.code == ABORT_PARAMS:
            raise ParamsMismatch(exc.reason) from exc
        raise
    try:
        header, tag, pk_a, e_blob, ct = _parse_record_frame(frame)
    except ProtocolError as exc:
        return bottom(f"record frame invalid: {exc}")
    try:
        algo = header.algorithm
    except ProtocolError:
        return bottom("record carries an unknown algorithm tag")
    if algo != params.algo:
        return bottom("record algorithm differs from the requested one")
    if header.params_digest != params.digest():
        return bottom("record parameter digest differs; tampered or "
                      "mismatched parameters")
    try:
        _check_payload_shape(params, header.payload_len)
    except InvalidInput as exc:
        return bottom(str(exc))
    m = crypto.unwrap_masked_key(e_blob, sk_b, pk_a)  # AuthError on tamper
    digest = crypto.sha256(ct)
    circuit = build_session_circuit(params, header.payload_len, count)
    state, keys = _ot_request(ch, circuit, {
        ("evaluator", "masked_key"): bits_from_bytes(m),
        ("evaluator", "ct_client"): bits_from_bytes(ct),
        ("evaluator", "ct_digest"): bits_from_bytes(digest),
        ("evaluator", "query"): query_bits,
    }, _session_prg(seed, "ot-req"))
    gc, own_labels = recv_garbled(ch, circuit)
    labels = _ot_finish(state, keys, circuit, ch.recv_expect(OT_MSG))
    out_labels = evaluate(gc, circuit, {**own_labels, **labels})
    bits_map = decode_outputs(gc.output_decode, out_labels)
    ch.send(OUTPUT, _pack_output({"fail": bits_map["fail"]}, ["fail"]))
    if bits_map["fail"][0]:
        return SessionOutcome(False, params.algo,
                              reason="in-circuit integrity check failed",
                              metrics=ch.metrics)
    raw, scores = interpret_scores(
        params, bits_map, _stored_count(params, header.payload_len), count)
    return SessionOutcome(True, params.algo, raw, scores,
                          metrics=ch.metrics)


# ------------------------------------------------------------- in-process

def compare_in_process(params: AlgoParams, items_a, items_b,
                       profile=None, seed=None):
    """Run both compare roles over a local channel pair (threads)."""
    ch_g, ch_e = transport.pair(profile)
    results = {}
    errors = {}

    def gar():
        try:
            results["garbler"] = run_compare_garbler(ch_g, params, items_a,
                                                     seed)
        except Exception as exc:  # surfaced after join
            errors["garbler"] = exc

    t = threading.Thread(target=gar)
    t.start()
    try:
        results["evaluator"] = run_compare_evaluator(ch_e, params, items_b,
                                                     seed)
    except Exception as exc:
        errors["evaluator"] = exc
    t.join()
    ch_g.close()
    ch_e.close()
    if errors:
        raise next(iter(errors.values()))
    return results["garbler"], results["evaluator"]


def evaluate_in_process(store: storage.RecordStore, record_id: str,
                        sk_b: bytes, pk_b: bytes, params: AlgoParams,
                        items, profile=None, seed=None):
    """Run one server-assisted session over a local channel pair."""
    ch_s, ch_c = transport.pair(profile)
    reports = {}

    def serve():
        reports["server"] = serve_session(ch_s, store,
                                          {params.algo: params}, seed)

    t = threading.Thread(target=serve)
    t.start()
    try:
        outcome = run_evaluate(ch_c, record_id, sk_b, pk_b, params, items,
                               seed)
    finally:
        t.join()
        ch_s.close()
        ch_c.close()
    return outcome, reports["server"]
