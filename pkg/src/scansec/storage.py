"""Encrypted scanpath records and the owner's escrow vault.

A record file is HEADER | CT | T | R | pk_A | count | (client_id, E)*
with all multi-byte integers big-endian.  HEADER is 58 bytes: magic
"SPC1", a version byte, the 16-byte CTR IV, the 4-byte payload length,
a 1-byte algorithm tag and a 32-byte parameter digest.  CT is AES-CTR
over the serialized payload, T is an HMAC tag over HEADER and a digest
of CT, R is the server's XOR share of the key, and each E is a fixed
44-byte AEAD blob wrapping M = K xor R for one authorized client.

The owner keeps (M, sk_A) per record in a passphrase-encrypted vault so
late authorization never requires K itself; everything else about the
record is reconstructible from the stored file.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from . import crypto
from .errors import AlreadyAuthorized, AuthError, InvalidInput, ProtocolError
from .fixedpoint import Q0_14, Q16_12

MAGIC = b"SPC1"
VERSION = 1
HEADER_LEN = 58
TAG_LEN = 32
MASK_LEN = 16
PK_LEN = 32
CLIENT_ID_LEN = 16
WRAP_LEN = 12 + 16 + 16  # nonce + wrapped M + GCM tag

ALGO_TAGS = {"scanmatch": 1, "multimatch": 2, "subsmatch": 3}
TAG_ALGOS = {v: k for k, v in ALGO_TAGS.items()}


@dataclass(frozen=True)
class Header:
    iv: bytes
    payload_len: int
    algo_tag: int
    params_digest: bytes

    def __post_init__(self):
        if len(self.iv) != 16 or len(self.params_digest) != 32:
            raise InvalidInput("bad header field sizes")
        if not 0 <= self.payload_len < 1 << 32:
            raise InvalidInput("payload length out of range")

    @property
    def algorithm(self) -> str:
        algo = TAG_ALGOS.get(self.algo_tag)
        if algo is None:
            raise ProtocolError(f"unknown algorithm tag {self.algo_tag}")
        return algo

    def pack(self) -> bytes:
        return (MAGIC + bytes([VERSION]) + self.iv
                + struct.pack(">I", self.payload_len)
                + bytes([self.algo_tag]) + self.params_digest)

    @classmethod
    def unpack(cls, data: bytes) -> "Header":
        if len(data) < HEADER_LEN:
            raise ProtocolError("header truncated")
        if data[:4] != MAGIC:
            raise ProtocolError("bad record magic")
        if data[4] != VERSION:
            raise ProtocolError(f"unsupported record version {data[4]}")
        return cls(iv=data[5:21],
                   payload_len=struct.unpack(">I", data[21:25])[0],
                   algo_tag=data[25], params_digest=data[26:58])


def params_digest(algo: str, params) -> bytes:
    """Digest binding algorithm parameters and fixed-point formats.

    params: the SubstitutionMatrix for scanmatch, (alphabet, ngram) for
    subsmatch, None for multimatch.
    """
    fmt = struct.pack(">4H", Q16_12.int_bits, Q16_12.frac_bits,
                      Q0_14.int_bits, Q0_14.frac_bits)
    body = bytes([ALGO_TAGS[algo]]) + fmt
    if algo == "scanmatch":
        m = params
        body += struct.pack(">iiii", m.grid or 0, m.bins,
                            m.gap_del, m.gap_ins)
        body += m.scores.astype(">i8").tobytes()
    elif algo == "subsmatch":
        alphabet, ngram = params
        body += struct.pack(">ii", alphabet, ngram)
    elif algo != "multimatch":
        raise InvalidInput(f"unknown algorithm {algo!r}")
    return crypto.sha256(b"scansec-params-v1" + body)


def client_id(pk: bytes) -> bytes:
    return crypto.sha256(b"scansec-client" + pk)[:CLIENT_ID_LEN]


# ---------------------------------------------------------------- payloads

def encode_symbol_payload(symbols) -> bytes:
    syms = np.asarray(symbols, dtype=np.int64)
    if syms.size == 0:
        raise InvalidInput("empty symbol sequence")
    if np.any(syms < 0) or np.any(syms > 255):
        raise InvalidInput("symbols must fit one byte each")
    return bytes(syms.astype(np.uint8).tobytes())


def decode_symbol_payload(data: bytes):
    if not data:
        raise InvalidInput("empty symbol payload")
    return np.frombuffer(data, dtype=np.uint8).astype(np.int64)


def encode_saccade_payload(words) -> bytes:
    """(n, 8) raw Q16.12 feature words to big-endian signed shorts."""
    arr = np.asarray(words, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 8 or arr.shape[0] == 0:
        raise InvalidInput("saccade payload wants an (n, 8) word array")
    if np.any(arr < -(1 << 15)) or np.any(arr >= 1 << 15):
        raise InvalidInput("saccade word outside 16-bit range")
    return arr.astype(">i2").tobytes()


def decode_saccade_payload(data: bytes):
    if not data or len(data) % 16:
        raise InvalidInput("saccade payload must be 16 bytes per saccade")
    return np.frombuffer(data, dtype=">i2").astype(np.int64).reshape(-1, 8)


def encode_frequency_payload(words) -> bytes:
    arr = np.asarray(words, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInput("frequency payload wants a flat word vector")
    if np.any(arr < 0) or np.any(arr >= 1 << 16):
        raise InvalidInput("frequency word outside 16-bit range")
    return arr.astype(">u2").tobytes()


def decode_frequency_payload(data: bytes):
    if not data or len(data) % 2:
        raise InvalidInput("frequency payload must be 2 bytes per entry")
    return np.frombuffer(data, dtype=">u2").astype(np.int64)


# ----------------------------------------------------------------- records

@dataclass
class StorageRecord:
    header: Header
    ct: bytes
    tag: bytes
    mask: bytes
    pk_a: bytes
    wrapped: dict = field(default_factory=dict)  # client_id -> E

    def pack(self) -> bytes:
        if self.header.payload_len != len(self.ct):
            raise ProtocolError("header length disagrees with ciphertext")
        out = bytearray(self.header.pack())
        out += self.ct + self.tag + self.mask + self.pk_a
        out += struct.pack(">I", len(self.wrapped))
        for cid in sorted(self.wrapped):
            blob = self.wrapped[cid]
            if len(cid) != CLIENT_ID_LEN or len(blob) != WRAP_LEN:
                raise ProtocolError("malformed authorization entry")
            out += cid + blob
        return bytes(out)

    @classmethod
    def unpack(cls, data: bytes) -> "StorageRecord":
        header = Header.unpack(data)
        off = HEADER_LEN
        ct_end = off + header.payload_len
        fixed_end = ct_end + TAG_LEN + MASK_LEN + PK_LEN + 4
        if len(data) < fixed_end:
            raise ProtocolError("record truncated")
        ct = data[off:ct_end]
        tag = data[ct_end:ct_end + TAG_LEN]
        mask = data[ct_end + TAG_LEN:ct_end + TAG_LEN + MASK_LEN]
        pk_a = data[ct_end + TAG_LEN + MASK_LEN:fixed_end - 4]
        (count,) = struct.unpack(">I", data[fixed_end - 4:fixed_end])
        entry = CLIENT_ID_LEN + WRAP_LEN
        if len(data) != fixed_end + count * entry:
            raise ProtocolError("record length disagrees with its counts")
        wrapped = {}
        for k in range(count):
            at = fixed_end + k * entry
            wrapped[data[at:at + CLIENT_ID_LEN]] = (
                data[at + CLIENT_ID_LEN:at + entry])
        return cls(header=header, ct=ct, tag=tag, mask=mask, pk_a=pk_a,
                   wrapped=wrapped)


def create_record(payload: bytes, algo: str, digest: bytes,
                  authorized_pks, rng=None):
    """Encrypt a payload into a fresh record.

    Returns (record_id, record, escrow) where escrow = (M, sk_A) for the
    owner's vault.  K and sk_A live only inside this call and the
    returned escrow; the record itself never determines K.
    """
    if not payload:
        raise InvalidInput("empty payload")
    if rng is None:
        rng = crypto.Prg(os.urandom(16))
    record_id = rng.tobytes(8).hex()
    k = rng.tobytes(16)
    r = rng.tobytes(16)
    iv = rng.tobytes(16)
    sk_a, pk_a = crypto.x25519_keypair(rng)
    header = Header(iv=iv, payload_len=len(payload),
                    algo_tag=ALGO_TAGS[algo], params_digest=digest)
    ct = crypto.aes_ctr_encrypt(k, iv, payload)
    tag = crypto.mac_tag(k, iv, header.pack(), ct)
    m = bytes(a ^ b for a, b in zip(k, r))
    wrapped = {client_id(pk): crypto.wrap_masked_key(m, sk_a, pk, rng)
               for pk in authorized_pks}
    record = StorageRecord(header=header, ct=ct, tag=tag, mask=r,
                           pk_a=pk_a, wrapped=wrapped)
    return record_id, record, (m, sk_a)


def authorize(record: StorageRecord, escrow, pk_new: bytes,
              rng=None) -> StorageRecord:
    """Add a wrapped key for one more client; everything else unchanged."""
    m, sk_a = escrow
    cid = client_id(pk_new)
    if cid in record.wrapped:
        raise AlreadyAuthorized("client already holds a wrapped key")
    wrapped = dict(record.wrapped)
    wrapped[cid] = crypto.wrap_masked_key(m, sk_a, pk_new, rng)
    return StorageRecord(header=record.header, ct=record.ct, tag=record.tag,
                         mask=record.mask, pk_a=record.pk_a, wrapped=wrapped)


class RecordStore:
    """Directory of record files, named by record id."""

    def __init__(self, root):
        self.root = str(root)
        os.makedirs(self.root, exist_ok=True)

    def path(self, record_id: str) -> str:
        if not record_id.isalnum():
            raise InvalidInput("record id must be alphanumeric")
        return os.path.join(self.root, record_id + ".rec")

    def save(self, record_id: str, record: StorageRecord) -> str:
        p = self.path(record_id)
        with open(p, "wb") as fh:
            fh.write(record.pack())
        return p

    def load(self, record_id: str) -> StorageRecord:
        p = self.path(record_id)
        if not os.path.exists(p):
            raise InvalidInput(f"no record {record_id!r}")
        with open(p, "rb") as fh:
            return StorageRecord.unpack(fh.read())

    def list_ids(self):
        return sorted(f[:-4] for f in os.listdir(self.root)
                      if f.endswith(".rec"))


# ------------------------------------------------------------------- vault

_VAULT_MAGIC = b"SPV1"
_VAULT_ENTRY = 8 + 16 + 32  # raw record id + M + sk_A


def _vault_key(passphrase: str, salt: bytes) -> bytes:
    kdf = Scrypt(salt=salt, length=32, n=1 << 14, r=8, p=1)
    return kdf.derive(passphrase.encode())


class OwnerVault:
    """Passphrase-encrypted map record_id -> (M, sk_A).

    The vault exists so the owner can authorize clients later without
    retaining K; it never leaves the owner's machine and is not needed
    for evaluation.
    """

    def __init__(self, path, passphrase: str):
        self.path = str(path)
        self._passphrase = passphrase
        self._entries = {}
        if os.path.exists(self.path):
            self._load()

    def _load(self):
        with open(self.path, "rb") as fh:
            data = fh.read()
        if len(data) < 4 + 16 + 12 + 16 or data[:4] != _VAULT_MAGIC:
            raise AuthError("vault file is not usable")
        salt, nonce = data[4:20], data[20:32]
        key = _vault_key(self._passphrase, salt)
        try:
            plain = AESGCM(key).decrypt(nonce, data[32:], None)
        except InvalidTag as exc:
            raise AuthError("wrong vault passphrase or corrupt vault") from exc
        if len(plain) % _VAULT_ENTRY:
            raise AuthError("vault payload malformed")
        for at in range(0, len(plain), _VAULT_ENTRY):
            rid = plain[at:at + 8].hex()
            self._entries[rid] = (plain[at + 8:at + 24],
                                  plain[at + 24:at + 56])

    def save(self):
        salt = os.urandom(16)
        nonce = os.urandom(12)
        key = _vault_key(self._passphrase, salt)
        plain = b"".join(bytes.fromhex(rid) + m + sk
                         for rid, (m, sk) in sorted(self._entries.items()))
        blob = _VAULT_MAGIC + salt + nonce + AESGCM(key).encrypt(
            nonce, plain, None)
        tmp = self.path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, self.path)

    def add(self, record_id: str, escrow):
        m, sk_a = escrow
        if len(m) != 16 or len(sk_a) != 32 or len(record_id) != 16:
            raise InvalidInput("bad escrow entry")
        self._entries[record_id] = (m, sk_a)

    def get(self, record_id: str):
        entry = self._entries.get(record_id)
        if entry is None:
            raise AuthError(f"vault holds no escrow for {record_id!r}")
        return entry

    def __contains__(self, record_id):
        return record_id in self._entries
