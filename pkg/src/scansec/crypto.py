"""Native cryptographic primitives.

Thin, explicit wrappers over the `cryptography` package and hashlib:
AES-128 (block, CTR, GCM), SHA-256, HMAC, X25519, HKDF, plus the
deterministic AES-CTR byte stream that garbling draws wire labels from.
The encryption phase and key wrapping use these directly; the in-circuit
variants are tested against them.
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
import os

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey, X25519PublicKey)
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.hashes import SHA256 as _SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import AuthError, InvalidInput

WRAP_INFO = b"scanpath-wrap-v1"
MAC_LABEL = b"MAC"


def aes_encrypt_block(key: bytes, block: bytes) -> bytes:
    if len(key) != 16 or len(block) != 16:
        raise InvalidInput("AES-128 wants 16-byte key and block")
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block)


def aes_ctr_encrypt(key: bytes, iv: bytes, data: bytes) -> bytes:
    """Counter mode with the full 128-bit IV as the initial counter.

    Block i is XORed with AES_K(IV + i mod 2^128), big-endian increment,
    which makes decryption the same operation.
    """
    if len(key) != 16 or len(iv) != 16:
        raise InvalidInput("AES-CTR wants 16-byte key and IV")
    enc = Cipher(algorithms.AES(key), modes.CTR(iv)).encryptor()
    return enc.update(data)


aes_ctr_decrypt = aes_ctr_encrypt


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hmac_sha256(key: bytes, data: bytes) -> bytes:
    return _hmac.new(key, data, hashlib.sha256).digest()


def ct_equal(a: bytes, b: bytes) -> bool:
    return _hmac.compare_digest(a, b)


def mac_key(k: bytes, iv: bytes) -> bytes:
    """Per-record MAC key, derived so the circuit can re-derive it."""
    return sha256(k + MAC_LABEL + iv)


def mac_tag(k: bytes, iv: bytes, header: bytes, ciphertext: bytes) -> bytes:
    """Record tag over the header and a digest of the ciphertext.

    Hashing the ciphertext first keeps the in-circuit HMAC message at a
    fixed small size; the digest is recomputed by the verifier.
    """
    return hmac_sha256(mac_key(k, iv), header + sha256(ciphertext))


def x25519_keypair(rng=None):
    if rng is None:
        sk = X25519PrivateKey.generate()
    else:
        sk = X25519PrivateKey.from_private_bytes(rng.tobytes(32))
    pk = sk.public_key().public_bytes_raw()
    return sk.private_bytes_raw(), pk


def x25519_shared(sk: bytes, pk: bytes) -> bytes:
    priv = X25519PrivateKey.from_private_bytes(sk)
    return priv.exchange(X25519PublicKey.from_public_bytes(pk))


def x25519_public(sk: bytes) -> bytes:
    return X25519PrivateKey.from_private_bytes(sk).public_key().public_bytes_raw()


def hkdf_sha256(ikm: bytes, info: bytes, length: int, salt: bytes = b"") -> bytes:
    return HKDF(algorithm=_SHA256(), length=length, salt=salt or None,
                info=info).derive(ikm)


def wrap_key(sk_a: bytes, pk_b: bytes) -> bytes:
    return hkdf_sha256(x25519_shared(sk_a, pk_b), WRAP_INFO, 16)


def wrap_masked_key(m: bytes, sk_a: bytes, pk_b: bytes, rng=None) -> bytes:
    """AEAD blob carrying the masked key M; nonce prepended."""
    if len(m) != 16:
        raise InvalidInput("masked key must be 16 bytes")
    nonce = rng.tobytes(12) if rng is not None else os.urandom(12)
    return nonce + AESGCM(wrap_key(sk_a, pk_b)).encrypt(nonce, m, None)


def unwrap_masked_key(blob: bytes, sk_b: bytes, pk_a: bytes) -> bytes:
    if len(blob) < 12 + 16:
        raise AuthError("wrapped key blob too short")
    try:
        return AESGCM(wrap_key(sk_b, pk_a)).decrypt(blob[:12], blob[12:], None)
    except InvalidTag as exc:
        raise AuthError("key unwrap failed") from exc


class Prg:
    """Deterministic byte stream: AES-128-CTR keystream under a hashed seed.

    Drives every seeded choice in the toolkit (wire labels, masks, test
    inputs) so that a session seed reproduces byte-identical artifacts.
    """

    def __init__(self, seed):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "big", signed=False)
        digest = sha256(b"scansec-prg" + bytes(seed))
        self._enc = Cipher(algorithms.AES(digest[:16]),
                           modes.CTR(digest[16:])).encryptor()

    def tobytes(self, n: int) -> bytes:
        return self._enc.update(bytes(n))

    def randint(self, upper: int) -> int:
        """Uniform integer in [0, upper) by rejection over 8-byte draws."""
        if upper <= 0:
            raise InvalidInput("upper must be positive")
        span = (1 << 64) - ((1 << 64) % upper)
        while True:
            v = int.from_bytes(self.tobytes(8), "big")
            if v < span:
                return v % upper

    def fork(self, label: bytes) -> "Prg":
        return Prg(self.tobytes(16) + label)
