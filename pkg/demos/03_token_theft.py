#!/usr/bin/env python3
"""Token theft end to end: extract the victim's stored pair, exfiltrate it
as a text bundle, import it on another device, and spend the victim's
quota from there - then revive a banned device the same way.

Run: python demos/03_token_theft.py
"""

from tokenbed import World
from tokenbed.attack import (
    disguise,
    export_bundle,
    extract,
    import_bundle,
    plain_prompt,
    scenario_revive_banned,
)

print("=" * 64)
print("Theft and disguise")
print("=" * 64)

world = World(seed=13)
victim = world.ensure_device("victim")
victim.fetch_linked_token_pair(world.clock.now)
print(f"\n[1] victim {victim.device_id} holds 1 TGT + "
      f"{len(victim.pair.otts)} OTTs in its login-tier store")

print("\n[2] malware reads the store; the victim clicks through the prompt")
bundle = extract(victim.store, plain_prompt(True), now=world.clock.now)
document = export_bundle(bundle)
print("    exfiltrated bundle (first lines):")
for line in document.decode().split("\n")[:4]:
    print(f"      {line[:72]}{'...' if len(line) > 72 else ''}")

print("\n[3] attacker imports the bundle and overwrites its own store")
attacker = world.ensure_device("attacker")
disguise(attacker, import_bundle(document))

print("\n[4] attacker requests now ride on the victim's tokens")
attacker.issue_request(b"attacker prompt", world.clock.now)
_, ott_bytes, tgt_bytes = world.gateway.transcript[-1]
print(f"    TGT in the attacker's request == victim's TGT bytes: "
      f"{tgt_bytes == victim.pair.tgt.serialize()}")
print("    nothing downstream of the relay can tell the difference.")

print()
print("=" * 64)
print("Reviving a locked-out device")
print("=" * 64)
outcome = scenario_revive_banned(World(seed=14))
print()
for note in outcome.notes:
    print(f"    - {note}")
print(f"\n    outcome: succeeded={outcome.succeeded}, "
      f"requests={outcome.requests_made}, "
      f"victim quota consumed={outcome.victim_quota_consumed}")
