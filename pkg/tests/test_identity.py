import hashlib
import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmarket.canonical import canonical_serialize
from gridmarket.identity import (
    Address,
    InvalidPublicKeyError,
    derive_address,
    generate_keypair,
    sign,
    verify,
)

from oracles import decompress_point, ecdsa_verify_oracle, sha256_oracle

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

ORDER_PAYLOAD = {
    "kind": "ORDER",
    "side": "SELL",
    "energy_wh": 3000,
    "limit_price_mct": 4000,
    "interval_id": 1842048,
}


def test_fixed_seed_is_deterministic():
    k0 = generate_keypair(bytes(32))
    k1 = generate_keypair(bytes(32))
    assert k0 == k1
    assert len(k0.private_key) == 32
    assert len(k0.public_key) == 33


def test_fresh_entropy_gives_distinct_keys():
    assert generate_keypair().public_key != generate_keypair().public_key


def test_address_matches_independent_sha256():
    kp = generate_keypair(b"\x07" * 32)
    assert derive_address(kp.public_key).bytes == sha256_oracle(kp.public_key)
    # and the stdlib, for good measure
    assert derive_address(kp.public_key).bytes == hashlib.sha256(kp.public_key).digest()


def test_address_oracle_agreement_on_1000_keys():
    rng = random.Random(42)
    for _ in range(1000):
        kp = generate_keypair(rng.randbytes(32))
        assert derive_address(kp.public_key).bytes == sha256_oracle(kp.public_key)


def test_address_determinism_and_distinctness():
    a = generate_keypair(b"\x01" * 32)
    b = generate_keypair(b"\x02" * 32)
    assert derive_address(a.public_key) == derive_address(a.public_key)
    assert derive_address(a.public_key) != derive_address(b.public_key)


def test_address_rendering_round_trips():
    addr = generate_keypair(b"\x03" * 32).address
    assert len(addr.hex) == 64
    assert addr.hex == addr.hex.lower()
    assert Address.from_hex(addr.hex) == addr


def test_invalid_point_rejected():
    kp = generate_keypair(b"\x04" * 32)
    bad = bytearray(kp.public_key)
    # walk the x coordinate until it stops being a quadratic residue
    while True:
        bad[-1] = (bad[-1] + 1) % 256
        try:
            decompress_point(bytes(bad))
        except AssertionError:
            break
    with pytest.raises(InvalidPublicKeyError):
        derive_address(bytes(bad))
    with pytest.raises(InvalidPublicKeyError):
        derive_address(b"\x02" * 12)


def test_sign_verify_round_trip():
    kp = generate_keypair(b"\x05" * 32)
    sig = sign(kp.private_key, ORDER_PAYLOAD)
    assert len(sig) == 64
    assert verify(kp.public_key, ORDER_PAYLOAD, sig)


def test_tampered_payload_rejected():
    kp = generate_keypair(b"\x05" * 32)
    sig = sign(kp.private_key, ORDER_PAYLOAD)
    tampered = dict(ORDER_PAYLOAD, energy_wh=3001)
    assert not verify(kp.public_key, tampered, sig)


def test_tampered_signature_rejected():
    kp = generate_keypair(b"\x05" * 32)
    sig = bytearray(sign(kp.private_key, ORDER_PAYLOAD))
    for i in range(0, 64, 7):
        flipped = bytearray(sig)
        flipped[i] ^= 0x01
        assert not verify(kp.public_key, ORDER_PAYLOAD, bytes(flipped))


def test_wrong_key_rejected():
    kp = generate_keypair(b"\x05" * 32)
    other = generate_keypair(b"\x06" * 32)
    sig = sign(kp.private_key, ORDER_PAYLOAD)
    assert not verify(other.public_key, ORDER_PAYLOAD, sig)


def test_malformed_signature_length_rejected():
    kp = generate_keypair(b"\x05" * 32)
    assert not verify(kp.public_key, ORDER_PAYLOAD, b"\x00" * 63)
    assert not verify(kp.public_key, ORDER_PAYLOAD, b"")


def test_golden_signature_fixture():
    fields = dict(
        line.split("=", 1)
        for line in (FIXTURES / "sig" / "order.txt").read_text().splitlines()
    )
    kp = generate_keypair(bytes.fromhex(fields["seed"]))
    payload = json.loads(fields["payload"])
    assert kp.public_key.hex() == fields["pubkey"]
    assert kp.address.hex == fields["address"]
    sig = sign(kp.private_key, payload)
    assert sig.hex() == fields["signature"]
    assert verify(kp.public_key, payload, sig)
    # independent textbook ECDSA agrees the pinned signature is valid
    assert ecdsa_verify_oracle(
        kp.public_key, canonical_serialize(payload), bytes.fromhex(fields["signature"])
    )


_payloads = st.dictionaries(
    st.text(min_size=1, max_size=6),
    st.one_of(st.integers(-(10**9), 10**9), st.text(max_size=6)),
    max_size=5,
)


@given(seed=st.binary(min_size=32, max_size=32), payload=_payloads)
@settings(max_examples=60, deadline=None)
def test_verify_of_sign_always_accepts(seed, payload):
    kp = generate_keypair(seed)
    assert verify(kp.public_key, payload, sign(kp.private_key, payload))


@given(seed=st.binary(min_size=32, max_size=32))
@settings(max_examples=25, deadline=None)
def test_signatures_agree_with_textbook_oracle(seed):
    kp = generate_keypair(seed)
    sig = sign(kp.private_key, ORDER_PAYLOAD)
    assert ecdsa_verify_oracle(kp.public_key, canonical_serialize(ORDER_PAYLOAD), sig)
