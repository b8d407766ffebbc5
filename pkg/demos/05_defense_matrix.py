#!/usr/bin/env python3
"""Run all three attacks under every defense profile and print the matrix.

Takes a minute or so: every cell is a fresh world with fresh 2048-bit keys.

Run: python demos/05_defense_matrix.py
"""

from tokenbed.defense import ATTACK_SCENARIOS, evaluate_defenses, matrix_mismatches

print("=" * 78)
print("Defense matrix (seed 1)")
print("=" * 78)

report = evaluate_defenses(seed=1)

width = max(len(label) for label, _ in report.rows) + 2
header = "".ljust(width) + "".join(s.ljust(24) for s in ATTACK_SCENARIOS)
print(header)
print("-" * len(header))
for label, cells in report.rows:
    row = label.ljust(width)
    for scenario in ATTACK_SCENARIOS:
        row += cells[scenario].verdict.ljust(24)
    print(row)

print()
for label, cells in report.rows:
    note = cells[ATTACK_SCENARIOS[0]].residual_risk_note
    print(f"  {label}: {note}")

problems = matrix_mismatches(report)
print()
if problems:
    print("UNEXPECTED CELLS:")
    for problem in problems:
        print(f"  {problem}")
else:
    print("Every cell matches the expected outcome, including the honest")
    print("failures: a privileged read defeats the entitlement gate, a")
    print("2-hour key only helps when the attacker delays, and quota-burn")
    print("DoS survives device binding because it never touches a node.")
