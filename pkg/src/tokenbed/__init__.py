"""tokenbed: a desk-scale testbed for a two-stage anonymous token
pipeline (TGT issuance -> OTT redemption -> request validation), the
token theft/replay attack against it, and its countermeasures.

Every vulnerability claim and every mitigation claim is a runnable,
assertable scenario; see the harness module and the ``testbed`` CLI.
"""

from .attack import (
    AttackOutcome,
    ExtractionMode,
    TokenBundle,
    disguise,
    export_bundle,
    extract,
    import_bundle,
    plain_prompt,
    scenario_baseline_theft,
    scenario_dos,
    scenario_revive_banned,
)
from .client import Caller, ClientDevice, CredentialStore, StoreTier, TokenPair
from .defense import DefenseProfile, DefenseReport, apply_profile, evaluate_defenses
from .harness import (
    SCENARIOS,
    ScenarioReport,
    SimClock,
    World,
    advance,
    expected_verdict,
    run_scenario,
    world_new,
)
from .services import DeviceAttestation, IssuerKeySet, QuotaLedger, ServiceConfig, SpentSet
from .tokens import Token, TokenChallenge, TokenKind

__version__ = "0.1.0"

__all__ = [
    "AttackOutcome", "Caller", "ClientDevice", "CredentialStore",
    "DefenseProfile", "DefenseReport", "DeviceAttestation", "ExtractionMode",
    "IssuerKeySet", "QuotaLedger", "SCENARIOS", "ScenarioReport",
    "ServiceConfig", "SimClock", "SpentSet", "StoreTier", "Token",
    "TokenBundle", "TokenChallenge", "TokenKind", "TokenPair", "World",
    "advance", "apply_profile", "disguise", "evaluate_defenses",
    "expected_verdict", "export_bundle", "extract", "import_bundle",
    "plain_prompt", "run_scenario", "scenario_baseline_theft", "scenario_dos",
    "scenario_revive_banned", "world_new",
]
