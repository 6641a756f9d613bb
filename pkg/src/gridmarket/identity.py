"""Keys, addresses and signatures for all transactions.

Accounts are secp256k1 keypairs (the Bitcoin curve); an account's address is
the SHA256 hash of its 33-byte compressed public key, rendered as 64 lowercase
hex characters. Signatures are 64-byte compact ECDSA (r || s, both 32 bytes
big-endian) over SHA256 of the canonical bytes of the payload, produced with
deterministic nonces so that identical inputs always yield identical
signatures. ``s`` is normalised to the low half of the scalar range, which
gives every message exactly one accepted signature encoding.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Any

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)

from .canonical import canonical_serialize

__all__ = [
    "CURVE_ORDER",
    "Address",
    "KeyPair",
    "InvalidPublicKeyError",
    "generate_keypair",
    "derive_address",
    "sign",
    "verify",
    "verify_bytes",
]

# secp256k1 group order; private scalars live in [1, CURVE_ORDER - 1].
CURVE_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141

_SIG_ALGO = ec.ECDSA(hashes.SHA256(), deterministic_signing=True)
_VERIFY_ALGO = ec.ECDSA(hashes.SHA256())


class InvalidPublicKeyError(ValueError):
    """Public key bytes do not encode a valid compressed curve point."""


@dataclass(frozen=True)
class Address:
    """SHA256 of a compressed public key, shown as 64 lowercase hex chars."""

    bytes: bytes

    def __post_init__(self) -> None:
        if len(self.bytes) != 32:
            raise ValueError("address must be exactly 32 bytes")

    @property
    def hex(self) -> str:
        return self.bytes.hex()

    @classmethod
    def from_hex(cls, text: str) -> "Address":
        if len(text) != 64 or text != text.lower():
            raise ValueError("address rendering must be 64 lowercase hex chars")
        return cls(bytes.fromhex(text))

    def __str__(self) -> str:
        return self.hex


@dataclass(frozen=True)
class KeyPair:
    """A secp256k1 keypair: 32-byte private scalar, 33-byte compressed point."""

    private_key: bytes
    public_key: bytes

    @property
    def address(self) -> Address:
        return derive_address(self.public_key)


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """Create a keypair, deterministically when ``seed`` is given.

    The seed is hashed to a candidate scalar and rehashed until the result
    falls in the valid range, so every 32-byte seed maps to some keypair and
    the same seed always maps to the same one. Without a seed, fresh OS
    entropy is used.
    """
    material = seed if seed is not None else os.urandom(32)
    candidate = hashlib.sha256(material).digest()
    while not 1 <= int.from_bytes(candidate, "big") < CURVE_ORDER:
        candidate = hashlib.sha256(candidate).digest()
    scalar = int.from_bytes(candidate, "big")
    private = _load_private(scalar.to_bytes(32, "big"))
    public = private.public_key().public_bytes(
        serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint
    )
    return KeyPair(private_key=scalar.to_bytes(32, "big"), public_key=public)


# Point validation and address hashing are hot paths during block replay;
# both are pure, so memoise per public key.
_ADDRESS_CACHE: dict[bytes, Address] = {}
_POINT_CACHE: dict[bytes, ec.EllipticCurvePublicKey] = {}


def _load_point(public_key: bytes) -> ec.EllipticCurvePublicKey:
    cached = _POINT_CACHE.get(public_key)
    if cached is not None:
        return cached
    if len(public_key) != 33:
        raise InvalidPublicKeyError("compressed public key must be 33 bytes")
    try:
        point = ec.EllipticCurvePublicKey.from_encoded_point(
            ec.SECP256K1(), public_key
        )
    except ValueError as exc:
        raise InvalidPublicKeyError(str(exc)) from exc
    if len(_POINT_CACHE) > 1 << 16:
        _POINT_CACHE.clear()
    _POINT_CACHE[public_key] = point
    return point


def derive_address(public_key: bytes) -> Address:
    """SHA256 of the compressed public key. Rejects invalid curve points."""
    cached = _ADDRESS_CACHE.get(public_key)
    if cached is not None:
        return cached
    _load_point(public_key)
    address = Address(hashlib.sha256(public_key).digest())
    if len(_ADDRESS_CACHE) > 1 << 16:
        _ADDRESS_CACHE.clear()
    _ADDRESS_CACHE[public_key] = address
    return address


def _to_compact(der: bytes) -> bytes:
    r, s = decode_dss_signature(der)
    if s > CURVE_ORDER // 2:
        s = CURVE_ORDER - s
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


# deriving the OpenSSL key object from the scalar is the expensive part of
# signing; a node reuses its one key thousands of times per run
_PRIVATE_CACHE: dict[bytes, ec.EllipticCurvePrivateKey] = {}


def _load_private(private_key: bytes) -> ec.EllipticCurvePrivateKey:
    cached = _PRIVATE_CACHE.get(private_key)
    if cached is not None:
        return cached
    scalar = int.from_bytes(private_key, "big")
    if not 1 <= scalar < CURVE_ORDER:
        raise ValueError("private key scalar out of range")
    key = ec.derive_private_key(scalar, ec.SECP256K1())
    if len(_PRIVATE_CACHE) > 1 << 12:
        _PRIVATE_CACHE.clear()
    _PRIVATE_CACHE[private_key] = key
    return key


def sign(private_key: bytes, payload: Any) -> bytes:
    """Sign the canonical bytes of ``payload``; returns a 64-byte signature."""
    key = _load_private(private_key)
    message = canonical_serialize(payload)
    return _to_compact(key.sign(message, _SIG_ALGO))


# Verification is pure, and during simulation every replica re-verifies the
# same signatures; a bounded memo collapses that to one real check each.
_VERIFY_CACHE: dict[bytes, bool] = {}
_VERIFY_CACHE_LIMIT = 1 << 20


def verify(public_key: bytes, payload: Any, signature: bytes) -> bool:
    """Check ``signature`` over the canonical bytes of ``payload``.

    Returns False for anything that does not verify: malformed signature
    length, non-canonical (high-s) encoding, invalid public key, or a payload
    or signature that differs in any bit from what was signed.
    """
    try:
        message = canonical_serialize(payload)
    except Exception:
        return False
    return verify_bytes(public_key, message, signature)


def verify_bytes(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Same as :func:`verify` for callers that already hold canonical bytes."""
    if len(signature) != 64:
        return False
    key = hashlib.sha256(public_key + signature + message).digest()
    cached = _VERIFY_CACHE.get(key)
    if cached is not None:
        return cached
    result = _verify_uncached(public_key, message, signature)
    if len(_VERIFY_CACHE) >= _VERIFY_CACHE_LIMIT:
        _VERIFY_CACHE.clear()
    _VERIFY_CACHE[key] = result
    return result


def _verify_uncached(public_key: bytes, message: bytes, signature: bytes) -> bool:
    r = int.from_bytes(signature[:32], "big")
    s = int.from_bytes(signature[32:], "big")
    if not 1 <= r < CURVE_ORDER:
        return False
    if not 1 <= s <= CURVE_ORDER // 2:
        return False
    try:
        point = _load_point(public_key)
    except InvalidPublicKeyError:
        return False
    try:
        point.verify(encode_dss_signature(r, s), message, _VERIFY_ALGO)
    except InvalidSignature:
        return False
    return True
