#!/usr/bin/env python3
"""Walk through one blind signature: the issuer signs a message it never
sees, and the unblinded result verifies like an ordinary signature.

Run: python demos/01_blind_signature_flow.py
"""

import random

from tokenbed import blindsig

rng = random.Random(2024)

print("=" * 64)
print("Blind signature flow")
print("=" * 64)

print("\n[1] issuer generates a 2048-bit signing key (12-hour window)")
key = blindsig.keygen(0, 12 * 3600, rng)
print(f"    key id:   {key.key_id.hex()[:32]}...")
print(f"    window:   [{key.valid_start}, {key.valid_end})")

message = b"the 98-byte signed portion would go here"
print(f"\n[2] client blinds its message ({len(message)} bytes)")
blinded, state = blindsig.blind(message, key.public_key, rng)
print(f"    blinded payload: {len(blinded.payload)} bytes, "
      f"{blinded.payload.hex()[:32]}...")
print(f"    message visible in payload? {message in blinded.payload}")

print("\n[3] issuer signs the blinded payload (sees only noise)")
blind_sig = blindsig.blind_sign(key, blinded)
print(f"    blind signature: {blind_sig.payload.hex()[:32]}...")

print("\n[4] client unblinds and self-checks")
signature = blindsig.finalize(state, blind_sig, key.public_key)
print(f"    signature: {len(signature)} bytes, {signature.hex()[:32]}...")

print("\n[5] anyone verifies against the public key")
print(f"    verify(message, signature)      -> {blindsig.verify(message, signature, key.public_key)}")
flipped = bytearray(message)
flipped[0] ^= 1
print(f"    verify(flipped message, ...)    -> {blindsig.verify(bytes(flipped), signature, key.public_key)}")

print("\n[6] cross-check: a direct deterministic signature over the same")
print("    message is byte-identical to the unblinded one")
direct = blindsig.sign_direct(key, message)
print(f"    direct == unblinded             -> {direct == signature}")

print("\nBecause two blindings of one message never repeat, the issuer")
print("cannot link the payload it signed to the signature it later sees:")
again, _ = blindsig.blind(message, key.public_key, rng)
print(f"    second blinding differs         -> {again.payload != blinded.payload}")
