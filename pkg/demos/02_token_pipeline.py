#!/usr/bin/env python3
"""The full two-stage token pipeline on a simulated device: one long-lived
TGT from the identity service, a cache of 50 single-use OTTs from the
token granting service, and a request that spends one of them.

Run: python demos/02_token_pipeline.py
"""

from tokenbed import World

world = World(seed=7)
print("=" * 64)
print("Two-stage token pipeline")
print("=" * 64)

victim = world.ensure_device("victim")
print(f"\n[1] device {victim.device_id} fetches its linked token pair")
pair = victim.fetch_linked_token_pair(world.clock.now)

tgt = pair.tgt
print("\n    TGT wire layout (354 bytes):")
print(f"      token_type       = 0x{tgt.token_type:04x}")
print(f"      nonce            = {tgt.nonce.hex()[:32]}... (the only client-chosen field)")
print(f"      challenge_digest = {tgt.challenge_digest.hex()[:32]}... (static per config)")
print(f"      token_key_id     = {tgt.token_key_id.hex()[:32]}... (selects the verify key)")
print(f"      authenticator    = {tgt.authenticator.hex()[:32]}... (256-byte blind signature)")
print(f"\n    cached OTTs: {len(pair.otts)}")

entry = world.ledger.entries[tgt.digest()]
print(f"    quota ledger for this TGT: {entry.redeemed_count}/{world.config.quota_limit} "
      f"redeemed this window")

print("\n[2] one request: pop an OTT, ship payload+TGT through the relay")
response = victim.issue_request(b"summarize my notifications", world.clock.now)
print(f"    node response: {response.status}, body={response.body.decode()}")
print(f"    cache after:   {len(pair.otts)} OTTs")
print(f"    spent set:     {len(world.spent)} consumed digest(s)")

print("\n[3] what each service logged (note: no device id below the relay)")
for event in world.log.events:
    if event.service in ("relay", "tgs", "gateway", "node"):
        print(f"    {event.line()}")

print("\n[4] replaying the spent OTT is refused")
from tokenbed.errors import DoubleSpend
spent_ott = world.gateway.transcript[-1][1]
from tokenbed.tokens import parse_token
try:
    world.gateway.validate_ott(parse_token(spent_ott), world.clock.now)
except DoubleSpend as err:
    print(f"    gateway says: {err}")

print("\n[5] expiry comes only from key windows: advance 13 simulated hours")
world.advance(13 * 3600)
dropped_before = len(victim.pair.otts)
victim.issue_request(b"still there?", world.clock.now)
print(f"    {dropped_before} cached OTTs were stale (12h key lapsed), dropped,")
print(f"    a fresh batch was redeemed, and the request still succeeded.")
