"""Cryptographic primitives, fixed repo-wide.

Suite: SHA-256 hashing/derivation, HMAC-SHA-512 PRF, ChaCha20-Poly1305
AEAD, Ed25519 signatures, X25519 sealed boxes. All randomness flows
through DeterministicRng so any fixed seed reproduces every byte.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey, Ed25519PublicKey)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey, X25519PublicKey)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.serialization import (
    Encoding, PrivateFormat, PublicFormat, NoEncryption)

from . import wire
from .errors import IntegrityError
from .naming import Name, parse_name

FIELD_PRIME = 2 ** 255 - 19
NONCE_SIZE = 12
SUITE = "sha256-hmac512-chacha20poly1305-ed25519-x25519"


def derive(context: str, *parts: bytes) -> bytes:
    """32-byte domain-separated derivation: SHA-256 over length-prefixed parts."""
    h = hashlib.sha256()
    h.update(struct.pack("<I", len(context)))
    h.update(context.encode())
    for p in parts:
        h.update(struct.pack("<I", len(p)))
        h.update(p)
    return h.digest()


class DeterministicRng:
    """SHA-256 counter-mode byte stream. Never exhausts; not thread-safe."""

    def __init__(self, seed: bytes):
        self._key = derive("aabac.rng", seed)
        self._counter = 0
        self._buf = b""

    def randbytes(self, n: int) -> bytes:
        while len(self._buf) < n:
            block = hashlib.sha256(self._key + struct.pack("<Q", self._counter)).digest()
            self._counter += 1
            self._buf += block
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def randbelow(self, bound: int) -> int:
        # 512 bits mod bound: bias is negligible for any bound <= 2^256
        return int.from_bytes(self.randbytes(64), "little") % bound

    def field_element(self) -> int:
        return self.randbelow(FIELD_PRIME)

    def fork(self, label: str) -> "DeterministicRng":
        return DeterministicRng(derive("aabac.rng.fork", self._key, label.encode()))


def new_rng(seed: bytes | None = None) -> DeterministicRng:
    return DeterministicRng(seed if seed is not None else os.urandom(32))


def encode_field(v: int) -> bytes:
    """Canonical little-endian 32-byte encoding of a field element."""
    return v.to_bytes(32, "little")


def decode_field(b: bytes) -> int:
    return int.from_bytes(b, "little")


def prf_field(key: bytes, message: bytes) -> int:
    """Keyed PRF into the field: HMAC-SHA-512 reduced mod the prime."""
    digest = hmac.new(key, message, hashlib.sha512).digest()
    return int.from_bytes(digest, "little") % FIELD_PRIME


def aead_seal(key: bytes, nonce: bytes, plaintext: bytes, aad: bytes = b"") -> bytes:
    return ChaCha20Poly1305(key).encrypt(nonce, plaintext, aad)


def aead_open(key: bytes, nonce: bytes, ciphertext: bytes, aad: bytes = b"") -> bytes:
    try:
        return ChaCha20Poly1305(key).decrypt(nonce, ciphertext, aad)
    except InvalidTag:
        raise IntegrityError("authenticated decryption failed")


@dataclass(frozen=True)
class PublicIdentity:
    """Network-visible half of an identity: signature and sealing keys."""

    name: Name
    verify_key: bytes  # 32-byte raw Ed25519
    box_key: bytes     # 32-byte raw X25519

    def verify(self, message: bytes, signature: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(self.verify_key).verify(signature, message)
            return True
        except InvalidSignature:
            return False

    def serialize(self) -> bytes:
        w = wire.Writer()
        w.str(self.name.format())
        w.bytes(self.verify_key)
        w.bytes(self.box_key)
        return w.getvalue()

    @classmethod
    def deserialize(cls, blob: bytes) -> "PublicIdentity":
        r = wire.Reader(blob)
        name = parse_name(r.str())
        verify_key = r.bytes()
        box_key = r.bytes()
        r.expect_done()
        return cls(name=name, verify_key=verify_key, box_key=box_key)


class Identity:
    """A named principal with deterministic signing and sealing keypairs."""

    def __init__(self, name: Name, seed: bytes):
        self.name = name
        self._sign_key = Ed25519PrivateKey.from_private_bytes(
            derive("aabac.identity.sign", seed, name.format().encode()))
        self._box_key = X25519PrivateKey.from_private_bytes(
            derive("aabac.identity.box", seed, name.format().encode()))

    def sign(self, message: bytes) -> bytes:
        return self._sign_key.sign(message)

    def public(self) -> PublicIdentity:
        return PublicIdentity(
            name=self.name,
            verify_key=self._sign_key.public_key().public_bytes(
                Encoding.Raw, PublicFormat.Raw),
            box_key=self._box_key.public_key().public_bytes(
                Encoding.Raw, PublicFormat.Raw),
        )

    def unseal(self, blob: bytes) -> bytes:
        if len(blob) < 32 + NONCE_SIZE:
            raise IntegrityError("sealed blob too short")
        eph_pub = blob[:32]
        nonce = blob[32:32 + NONCE_SIZE]
        ct = blob[32 + NONCE_SIZE:]
        shared = self._box_key.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        key = derive("aabac.seal", shared, eph_pub)
        return aead_open(key, nonce, ct)

    def _private_box_bytes(self) -> bytes:
        return self._box_key.private_bytes(
            Encoding.Raw, PrivateFormat.Raw, NoEncryption())


def seal_to(recipient: PublicIdentity, plaintext: bytes, rng: DeterministicRng) -> bytes:
    """Anonymous sealed box: ephemeral X25519 + AEAD under the shared key."""
    eph = X25519PrivateKey.from_private_bytes(rng.randbytes(32))
    eph_pub = eph.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    shared = eph.exchange(X25519PublicKey.from_public_bytes(recipient.box_key))
    key = derive("aabac.seal", shared, eph_pub)
    nonce = rng.randbytes(NONCE_SIZE)
    return eph_pub + nonce + aead_seal(key, nonce, plaintext)


class TrustStore:
    """Flat registry of trusted public identities, keyed by name."""

    def __init__(self):
        self._by_name: dict[str, PublicIdentity] = {}

    def add(self, identity: PublicIdentity) -> None:
        self._by_name[identity.name.format()] = identity

    def get(self, name: Name) -> PublicIdentity | None:
        return self._by_name.get(name.format())

    def __contains__(self, name: Name) -> bool:
        return name.format() in self._by_name
