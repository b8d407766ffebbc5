#!/usr/bin/env python3
"""Denial of service with a stolen TGT: redeem OTT batches and throw them
away until the rate limiter trips. The victim can no longer top up and
sees the service as unavailable - with zero consumed tokens anywhere -
until the cooldown lapses a simulated day later.

Run: python demos/04_dos_and_recovery.py
"""

from tokenbed import World
from tokenbed.attack import scenario_dos

print("=" * 64)
print("Quota-burn denial of service")
print("=" * 64)

world = World(seed=21)
outcome = scenario_dos(world)

print()
for note in outcome.notes:
    print(f"    - {note}")

print(f"""
    succeeded:             {outcome.succeeded}
    quota burned:          {outcome.victim_quota_consumed} redemptions
    gateway spends caused: {outcome.extras['loop_spent_delta']} (dropping, not using)
    victim starved:        {outcome.extras['victim_unavailable']}
    victim recovered:      {outcome.extras['victim_recovered']} (after 1 simulated day)
""")

print("The ledger charged every one of those redemptions to the victim's")
print("TGT digest; the attacker's name appears nowhere:")
for digest_hex, count, lifetime in world.ledger.snapshot():
    print(f"    ledger[{digest_hex[:16]}...] window={count} lifetime={lifetime}")
