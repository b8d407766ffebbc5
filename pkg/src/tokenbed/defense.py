"""Countermeasure configuration and evaluation.

A DefenseProfile bundles the four hardening knobs (store tier, TGT signing
key lifetime, fresh-TGT-on-launch, device binding). evaluate_defenses runs
the three attack scenarios under each profile and reports, per cell, the
outcome and the layer that blocked it.

The default matrix includes a deliberately dishonest-looking row: the
entitlement-protected store evaluated against a privileged reader, which
succeeds. That row is the residual-risk record for store hardening; it is
a mitigation, not a fix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .attack import (
    ENTITLEMENT_BYPASS,
    AttackOutcome,
    ExtractionMode,
    plain_prompt,
    scenario_baseline_theft,
    scenario_dos,
    scenario_revive_banned,
)
from .client import StoreTier
from .services import ServiceConfig

ATTACK_SCENARIOS = ("baseline-theft", "revive-banned", "dos")

_SCENARIO_FNS = {
    "baseline-theft": scenario_baseline_theft,
    "revive-banned": scenario_revive_banned,
    "dos": scenario_dos,
}


@dataclass(frozen=True)
class DefenseProfile:
    store_tier: StoreTier = StoreTier.LOGIN_KEYCHAIN
    tgt_key_lifetime_override: Optional[int] = None
    fresh_tgt_on_launch: bool = False
    device_binding_enabled: bool = False

    @classmethod
    def baseline(cls) -> "DefenseProfile":
        return cls()


@dataclass(frozen=True)
class DefenseRow:
    """One matrix row: a profile plus how extraction is attempted."""

    label: str
    profile: DefenseProfile
    extraction: ExtractionMode
    residual_risk_note: str


@dataclass
class DefenseCell:
    outcome: AttackOutcome
    blocking_layer: Optional[str]
    residual_risk_note: str

    @property
    def verdict(self) -> str:
        if self.outcome.succeeded:
            return "succeeded"
        return f"blocked:{self.blocking_layer or 'unspecified'}"


@dataclass
class DefenseReport:
    rows: list[tuple[str, dict[str, DefenseCell]]] = field(default_factory=list)

    def verdicts(self) -> dict[tuple[str, str], str]:
        out = {}
        for label, cells in self.rows:
            for scenario, cell in cells.items():
                out[(label, scenario)] = cell.verdict
        return out


def default_rows() -> list[DefenseRow]:
    baseline = DefenseProfile.baseline()
    return [
        DefenseRow("baseline", baseline, plain_prompt(True),
                   "no countermeasures; tokens open to any approved caller"),
        DefenseRow("entitlement-store",
                   DefenseProfile(store_tier=StoreTier.ENTITLEMENT_PROTECTED),
                   plain_prompt(True),
                   "store API gated on a restricted entitlement; privileged code bypasses it"),
        DefenseRow("entitlement-store-bypass-read",
                   DefenseProfile(store_tier=StoreTier.ENTITLEMENT_PROTECTED),
                   ENTITLEMENT_BYPASS,
                   "privileged read walks around the entitlement gate: mitigation only"),
        DefenseRow("hardware-sealed",
                   DefenseProfile(store_tier=StoreTier.HARDWARE_SEALED),
                   plain_prompt(True),
                   "plaintext released only to the owning daemon; live-memory theft remains"),
        DefenseRow("tgt-key-2h",
                   DefenseProfile(tgt_key_lifetime_override=2 * 3600),
                   plain_prompt(True),
                   "short key lifetime shrinks the replay window; immediate use still works"),
        DefenseRow("fresh-tgt",
                   DefenseProfile(fresh_tgt_on_launch=True),
                   plain_prompt(True),
                   "nothing at rest to steal; live-memory theft remains"),
        DefenseRow("device-binding",
                   DefenseProfile(device_binding_enabled=True),
                   plain_prompt(True),
                   "tokens committed to a device key; replay fails without the private key"),
    ]


# what the default matrix must produce; the matrix scenario fails otherwise
EXPECTED_MATRIX: dict[tuple[str, str], str] = {
    ("baseline", "baseline-theft"): "succeeded",
    ("baseline", "revive-banned"): "succeeded",
    ("baseline", "dos"): "succeeded",
    ("entitlement-store", "baseline-theft"): "blocked:AccessDenied",
    ("entitlement-store", "revive-banned"): "blocked:AccessDenied",
    ("entitlement-store", "dos"): "blocked:AccessDenied",
    ("entitlement-store-bypass-read", "baseline-theft"): "succeeded",
    ("entitlement-store-bypass-read", "revive-banned"): "succeeded",
    ("entitlement-store-bypass-read", "dos"): "succeeded",
    ("hardware-sealed", "baseline-theft"): "blocked:AccessDenied",
    ("hardware-sealed", "revive-banned"): "blocked:AccessDenied",
    ("hardware-sealed", "dos"): "blocked:AccessDenied",
    ("tgt-key-2h", "baseline-theft"): "succeeded",
    ("tgt-key-2h", "revive-banned"): "blocked:ExpiredToken",
    ("tgt-key-2h", "dos"): "succeeded",
    ("fresh-tgt", "baseline-theft"): "blocked:NotFound",
    ("fresh-tgt", "revive-banned"): "blocked:NotFound",
    ("fresh-tgt", "dos"): "blocked:NotFound",
    # binding stops replay at the node; quota burn needs no node access
    ("device-binding", "baseline-theft"): "blocked:DeviceMismatch",
    ("device-binding", "revive-banned"): "blocked:DeviceMismatch",
    ("device-binding", "dos"): "succeeded",
}


def apply_profile(world, profile: DefenseProfile):
    """Rebuild an unstarted world's stores, key lifetimes, fetcher behavior
    and validator flags for ``profile``. Identical to constructing the
    world with the profile in the first place."""
    if world.started:
        raise RuntimeError("cannot apply a profile to a world that already started")
    world.reset(profile=profile)
    return world


def evaluate_defenses(rows: Optional[list[DefenseRow]] = None, seed: int = 1,
                      config: Optional[ServiceConfig] = None) -> DefenseReport:
    """Run every attack scenario under every row; one fresh world per cell,
    all from the same seed so rows differ only by their defenses."""
    from .harness import World  # runtime import; harness wires this module back

    rows = default_rows() if rows is None else rows
    report = DefenseReport()
    for row in rows:
        cells: dict[str, DefenseCell] = {}
        for scenario in ATTACK_SCENARIOS:
            world = World(seed, config=config, profile=row.profile)
            outcome = _SCENARIO_FNS[scenario](world, mode=row.extraction)
            cells[scenario] = DefenseCell(
                outcome=outcome,
                blocking_layer=None if outcome.succeeded else outcome.blocking_layer,
                residual_risk_note=row.residual_risk_note,
            )
        report.rows.append((row.label, cells))
    return report


def matrix_mismatches(report: DefenseReport) -> list[str]:
    """Cells whose verdict differs from the expected matrix."""
    problems = []
    verdicts = report.verdicts()
    for key, expected in EXPECTED_MATRIX.items():
        actual = verdicts.get(key)
        if actual != expected:
            problems.append(f"{key[0]}/{key[1]}: expected {expected}, got {actual}")
    for key in verdicts:
        if key not in EXPECTED_MATRIX:
            problems.append(f"{key[0]}/{key[1]}: unexpected cell")
    return problems
