"""Simulated clock, world wiring, scenario runner, and report emission.

A World wires every service behind the relay, owns the single seeded RNG
that all randomness flows from, and never reads the wall clock: time moves
only through explicit ``advance`` calls, which also drive key rotation and
quota cooldown sweeps. Two worlds built from equal (seed, config, profile)
and driven through the same scenario produce byte-identical reports.

Report file format (UTF-8):

    REPORT v1 scenario=<name> seed=<N>
    verdict=<succeeded|blocked:<error_code>>
    metric=<key>:<value>        (one line per metric)
    events:
    <event log lines, tab-separated>
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Optional

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

from . import attack, defense
from .blindsig import SIGNATURE_LEN, BlindedMessage
from .client import ClientDevice, CredentialStore, StoreTier
from .defense import DefenseProfile
from .errors import UnknownScenario
from .eventlog import EventLog
from .services import (
    Gateway,
    ComputeNode,
    IdentityService,
    IssuanceBanList,
    IssuerKeySet,
    OTT_ISSUER_NAME,
    QuotaLedger,
    Relay,
    RelayedRequest,
    ServiceConfig,
    SpentSet,
    TGT_ISSUER_NAME,
    TokenGrantingService,
)
from .tokens import TokenKind, build_challenge

SCENARIOS = ("pipeline-smoke", "baseline-theft", "revive-banned", "dos",
             "defense-matrix")


@dataclass
class SimClock:
    """Simulated epoch seconds; advanced only explicitly, never decreasing."""

    now: int = 0

    def advance(self, dt: int) -> None:
        if dt < 0:
            raise ValueError(f"clock cannot move backwards (dt={dt})")
        self.now += dt


class World:
    """Everything one scenario needs: clock, services, devices, seed."""

    def __init__(self, seed: int, config: Optional[ServiceConfig] = None,
                 profile: Optional[DefenseProfile] = None):
        self.seed = seed
        self.base_config = config if config is not None else ServiceConfig()
        self.reset(profile if profile is not None else DefenseProfile.baseline())

    def reset(self, profile: DefenseProfile) -> None:
        """(Re)build from the seed, as if constructed with ``profile``."""
        from dataclasses import replace

        self.profile = profile
        effective = self.base_config
        if profile.tgt_key_lifetime_override is not None:
            effective = replace(effective,
                                tgt_key_lifetime=profile.tgt_key_lifetime_override)
        if profile.device_binding_enabled:
            effective = replace(effective, device_binding_enabled=True)
        self.config = effective

        self.rng = random.Random(self.seed)
        self.clock = SimClock(0)
        self.log = EventLog()
        self.keyset = IssuerKeySet(
            self.rng,
            {TokenKind.TGT: effective.tgt_key_lifetime,
             TokenKind.OTT: effective.ott_key_lifetime},
            self.log,
        )
        self.ledger = QuotaLedger()
        self.spent = SpentSet()
        self.banlist = IssuanceBanList()
        self.challenges = {
            TokenKind.TGT: build_challenge(TokenKind.TGT, TGT_ISSUER_NAME),
            TokenKind.OTT: build_challenge(TokenKind.OTT, OTT_ISSUER_NAME),
        }
        self.identity = IdentityService(self.keyset, self.banlist, effective, self.log)
        self.tgs = TokenGrantingService(self.keyset, self.ledger, effective, self.log)
        self.relay = Relay(self.log)
        self.node = ComputeNode(self.keyset, effective, self.log)
        self.gateway = Gateway(self.keyset, self.spent, self.node, effective, self.log)
        self.devices: dict[str, ClientDevice] = {}
        self.started = False
        self._consumed = False

    # -- devices --------------------------------------------------------------

    def ensure_device(self, name: str, platform_genuine: bool = True) -> ClientDevice:
        if name in self.devices:
            return self.devices[name]
        self.started = True
        device_id = f"device-{name}-{self.rng.randbytes(4).hex()}"
        source_addr = f"203.0.113.{len(self.devices) + 1}"
        device_key = None
        if self.config.device_binding_enabled:
            device_key = Ed25519PrivateKey.from_private_bytes(self.rng.randbytes(32))
        store = CredentialStore(self.profile.store_tier,
                                owner_daemon_id=f"daemon-{name}")
        device = ClientDevice(name, device_id, store, self,
                              source_addr=source_addr,
                              platform_genuine=platform_genuine,
                              fresh_tgt_on_launch=self.profile.fresh_tgt_on_launch,
                              device_key=device_key)
        self.devices[name] = device
        return device

    def device_ids(self) -> list[str]:
        return [d.device_id for d in self.devices.values()]

    # -- time -----------------------------------------------------------------

    def advance(self, dt: int) -> "World":
        """Move the clock, then rotate keys and sweep cooled quota entries."""
        if dt < 0:
            raise ValueError(f"negative time step {dt}")
        if dt == 0:
            return self
        self.started = True
        self.clock.advance(dt)
        now = self.clock.now
        self.keyset.rotate(now)
        for digest in self.ledger.sweep(now):
            self.log.log(now, "tgs", "QUOTA_RESET", digest, detail="cooldown elapsed")
        return self

    # -- transport (everything below here goes through the relay) -------------

    def send_redeem(self, tgt, blinded_batch, metadata: dict[str, str], now: int):
        self.started = True
        payload = b"".join(b.payload for b in blinded_batch)
        request = RelayedRequest(payload=payload, tokens=(tgt,), metadata=dict(metadata))
        forwarded = self.relay.forward(request, now)
        batch = [BlindedMessage(forwarded.payload[i:i + SIGNATURE_LEN])
                 for i in range(0, len(forwarded.payload), SIGNATURE_LEN)]
        return self.tgs.redeem(forwarded.tokens[0], batch, now)

    def send_request(self, request: RelayedRequest, now: int):
        self.started = True
        forwarded = self.relay.forward(request, now)
        return self.gateway.handle(forwarded, now)


def world_new(seed: int, config: Optional[ServiceConfig] = None,
              profile: Optional[DefenseProfile] = None) -> World:
    return World(seed, config=config, profile=profile)


def advance(world: World, dt: int) -> World:
    return world.advance(dt)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^REPORT v1 scenario=(\S+) seed=(-?\d+)$")


@dataclass
class ScenarioReport:
    scenario: str
    seed: int
    verdict: str
    metrics: list[tuple[str, str]] = field(default_factory=list)
    events: list[str] = field(default_factory=list)

    def render(self) -> str:
        lines = [f"REPORT v1 scenario={self.scenario} seed={self.seed}",
                 f"verdict={self.verdict}"]
        lines += [f"metric={key}:{value}" for key, value in self.metrics]
        lines.append("events:")
        lines += self.events
        return "\n".join(lines) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())

    @classmethod
    def parse(cls, text: str) -> "ScenarioReport":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if len(lines) < 3:
            raise ValueError("report too short")
        header = _HEADER_RE.match(lines[0])
        if not header:
            raise ValueError(f"bad report header: {lines[0]!r}")
        if not lines[1].startswith("verdict="):
            raise ValueError("missing verdict line")
        report = cls(scenario=header.group(1), seed=int(header.group(2)),
                     verdict=lines[1].split("=", 1)[1])
        index = 2
        while index < len(lines) and lines[index].startswith("metric="):
            key, value = lines[index][len("metric="):].split(":", 1)
            report.metrics.append((key, value))
            index += 1
        if index >= len(lines) or lines[index] != "events:":
            raise ValueError("missing events section")
        report.events = lines[index + 1:]
        return report


# ---------------------------------------------------------------------------
# scenario runner
# ---------------------------------------------------------------------------

def expected_verdict(scenario: str, profile: DefenseProfile) -> str:
    """What the verdict should be for a scenario under a profile: attacks
    succeed on the baseline and are blocked under a defense that covers
    them. Used by the CLI to turn a run into an exit code."""
    if scenario in ("pipeline-smoke", "defense-matrix"):
        return "succeeded"
    hardened_store = profile.store_tier is not StoreTier.LOGIN_KEYCHAIN
    fresh = profile.fresh_tgt_on_launch
    binding = profile.device_binding_enabled
    if scenario == "baseline-theft":
        blocked = hardened_store or fresh or binding
    elif scenario == "revive-banned":
        blocked = (hardened_store or fresh or binding
                   or profile.tgt_key_lifetime_override is not None)
    elif scenario == "dos":
        # quota burn only needs the TGS; binding and rotation do not stop it
        blocked = hardened_store or fresh
    else:
        raise UnknownScenario(scenario)
    return "blocked" if blocked else "succeeded"


def _outcome_metrics(world: World, outcome: attack.AttackOutcome) -> list[tuple[str, str]]:
    metrics = [
        ("requests_made", str(outcome.requests_made)),
        ("victim_quota_consumed", str(outcome.victim_quota_consumed)),
    ]
    metrics += [(key, value) for key, value in outcome.extras.items()]
    metrics.append(("spent_set", str(len(world.spent))))
    for digest_hex, count, lifetime in world.ledger.snapshot():
        metrics.append((f"ledger.{digest_hex[:16]}", f"{count}/{lifetime}"))
    now = world.clock.now
    for name in sorted(world.devices):
        device = world.devices[name]
        until = world.banlist.banned_until.get(device.device_id)
        status = "banned" if until is not None and now < until else "active"
        metrics.append((f"device.{name}", status))
    return metrics


def _run_pipeline_smoke(world: World) -> tuple[str, list[tuple[str, str]]]:
    victim = world.ensure_device("victim")
    pair = victim.fetch_linked_token_pair(world.clock.now)
    cached = len(pair.otts)
    response = victim.issue_request(b"smoke prompt", world.clock.now)
    checks = (len(victim.issued_tgt_digests) == 1
              and cached == world.config.ott_batch_target
              and len(pair.otts) == cached - 1
              and len(world.spent) == 1
              and response.status == "ok")
    metrics = [
        ("tgt_issued", str(len(victim.issued_tgt_digests))),
        ("otts_redeemed", str(cached)),
        ("requests", "1"),
        ("cache_after", str(len(pair.otts))),
        ("spent_set", str(len(world.spent))),
    ]
    return ("succeeded" if checks else "blocked:SmokeCheck"), metrics


def _run_defense_matrix(world: World) -> tuple[str, list[tuple[str, str]]]:
    report = defense.evaluate_defenses(seed=world.seed, config=world.base_config)
    mismatches = defense.matrix_mismatches(report)
    metrics = []
    for label, cells in report.rows:
        for scenario in defense.ATTACK_SCENARIOS:
            cell = cells[scenario]
            metrics.append((f"matrix.{label}.{scenario}", cell.verdict))
            world.log.log(world.clock.now, "scenario", "MATRIX_CELL",
                          detail=f"{label}/{scenario}: {cell.verdict} "
                                 f"({cell.residual_risk_note})")
    for problem in mismatches:
        world.log.log(world.clock.now, "scenario", "MATRIX_MISMATCH", detail=problem)
    verdict = "succeeded" if not mismatches else "blocked:MatrixMismatch"
    return verdict, metrics


def run_scenario(name: str, world: World) -> ScenarioReport:
    """Execute one named scenario; the world is consumed by the run."""
    if name not in SCENARIOS:
        raise UnknownScenario(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    if world._consumed:
        raise RuntimeError("world already consumed by a previous scenario run")
    world._consumed = True

    if name == "pipeline-smoke":
        verdict, metrics = _run_pipeline_smoke(world)
    elif name == "defense-matrix":
        verdict, metrics = _run_defense_matrix(world)
    else:
        fn = {"baseline-theft": attack.scenario_baseline_theft,
              "revive-banned": attack.scenario_revive_banned,
              "dos": attack.scenario_dos}[name]
        outcome = fn(world)
        for note in outcome.notes:
            world.log.log(world.clock.now, "scenario", "NOTE", detail=note)
        verdict = ("succeeded" if outcome.succeeded
                   else f"blocked:{outcome.blocking_layer or 'unspecified'}")
        metrics = _outcome_metrics(world, outcome)

    return ScenarioReport(scenario=name, seed=world.seed, verdict=verdict,
                          metrics=metrics, events=world.log.lines())
