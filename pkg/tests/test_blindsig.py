import random

import pytest

from tokenbed import blindsig
from tokenbed.blindsig import (
    BlindSignatureError,
    BlindedMessage,
    blind,
    blind_sign,
    finalize,
    key_id_for,
    keygen,
    sign_direct,
    verify,
)


def roundtrip(message, key, rng):
    blinded, state = blind(message, key.public_key, rng)
    signature = blind_sign(key, blinded)
    return finalize(state, signature, key.public_key)


# --- keygen ---------------------------------------------------------------

def test_keygen_rejects_empty_window():
    with pytest.raises(ValueError):
        keygen(100, 100)
    with pytest.raises(ValueError):
        keygen(100, 50)


def test_keygen_window_fields():
    key = keygen(0, 12 * 3600, random.Random(0))
    assert key.valid_start == 0
    assert key.valid_end == 12 * 3600
    assert key.valid_at(0) and key.valid_at(12 * 3600 - 1)
    assert not key.valid_at(12 * 3600)


def test_keygen_distinct_keys_distinct_ids(issuer_key, second_key):
    assert issuer_key.key_id != second_key.key_id


def test_keygen_seeded_is_reproducible():
    a = keygen(0, 10, random.Random(7))
    b = keygen(0, 10, random.Random(7))
    assert a.key_id == b.key_id


def test_key_id_deterministic(issuer_key):
    once = key_id_for(issuer_key.public_key)
    twice = key_id_for(issuer_key.public_key)
    assert once == twice == issuer_key.key_id
    assert len(once) == 32


# --- blind ----------------------------------------------------------------

def test_blind_rejects_empty_message(issuer_key):
    with pytest.raises(ValueError):
        blind(b"", issuer_key.public_key)


def test_blind_payload_is_modulus_sized(issuer_key):
    rng = random.Random(2)
    message = rng.randbytes(98)  # the signed-portion width
    blinded, _ = blind(message, issuer_key.public_key, rng)
    assert len(blinded.payload) == 256


def test_blind_twice_gives_distinct_payloads(issuer_key):
    rng = random.Random(3)
    message = b"same message, blinded twice"
    first, _ = blind(message, issuer_key.public_key, rng)
    second, _ = blind(message, issuer_key.public_key, rng)
    assert first.payload != second.payload


def test_blinding_uniqueness_over_100_calls(issuer_key):
    rng = random.Random(4)
    message = b"fixed message"
    payloads = {blind(message, issuer_key.public_key, rng)[0].payload
                for _ in range(100)}
    assert len(payloads) == 100


def test_signer_never_sees_message_bytes(issuer_key):
    # observable blindness: the message is not a contiguous substring of
    # the blinded payload, over 100 fuzzed trials with |m| >= 16
    rng = random.Random(5)
    for _ in range(100):
        message = rng.randbytes(rng.randrange(16, 128))
        blinded, _ = blind(message, issuer_key.public_key, rng)
        assert message not in blinded.payload


# --- blind_sign -----------------------------------------------------------

def test_blind_sign_rejects_wrong_length(issuer_key):
    with pytest.raises(ValueError):
        blind_sign(issuer_key, BlindedMessage(b"\x01" * 10))


def test_blind_sign_deterministic_on_fixed_payload(issuer_key):
    rng = random.Random(6)
    blinded, _ = blind(b"payload", issuer_key.public_key, rng)
    assert blind_sign(issuer_key, blinded).payload == blind_sign(issuer_key, blinded).payload


# --- finalize / verify ----------------------------------------------------

def test_roundtrip_accepts(issuer_key):
    rng = random.Random(7)
    message = b"roundtrip message"
    signature = roundtrip(message, issuer_key, rng)
    assert len(signature) == 256
    assert verify(message, signature, issuer_key.public_key)


def test_roundtrip_equals_direct_deterministic_signature(issuer_key):
    # independent oracle: the non-blind deterministic signer must produce
    # the exact same bytes the blind flow unblinds to
    rng = random.Random(8)
    for size in (1, 16, 98, 354, 1024):
        message = rng.randbytes(size)
        assert roundtrip(message, issuer_key, rng) == sign_direct(issuer_key, message)


def test_roundtrip_fuzz_lengths(issuer_key):
    rng = random.Random(9)
    for _ in range(50):
        message = rng.randbytes(rng.randrange(1, 1025))
        assert verify(message, roundtrip(message, issuer_key, rng),
                      issuer_key.public_key)


def test_finalize_with_wrong_key_fails(issuer_key, second_key):
    rng = random.Random(10)
    blinded, state = blind(b"message", issuer_key.public_key, rng)
    foreign = blind_sign(second_key, blinded)
    with pytest.raises(BlindSignatureError):
        finalize(state, foreign, issuer_key.public_key)


def test_finalize_consumes_state(issuer_key):
    rng = random.Random(11)
    blinded, state = blind(b"message", issuer_key.public_key, rng)
    signature = blind_sign(issuer_key, blinded)
    finalize(state, signature, issuer_key.public_key)
    with pytest.raises(BlindSignatureError):
        finalize(state, signature, issuer_key.public_key)


def test_verify_rejects_message_bitflip(issuer_key):
    rng = random.Random(12)
    message = bytearray(rng.randbytes(64))
    signature = roundtrip(bytes(message), issuer_key, rng)
    message[17] ^= 0x01
    assert not verify(bytes(message), signature, issuer_key.public_key)


def test_verify_rejects_signature_bitflip(issuer_key):
    rng = random.Random(13)
    message = rng.randbytes(64)
    signature = bytearray(roundtrip(message, issuer_key, rng))
    signature[100] ^= 0x80
    assert not verify(message, bytes(signature), issuer_key.public_key)


def test_verify_rejects_garbage_signature(issuer_key):
    assert not verify(b"message", b"\x00" * 256, issuer_key.public_key)
    assert not verify(b"message", b"short", issuer_key.public_key)
