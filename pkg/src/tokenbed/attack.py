"""Token theft and replay: extraction on the victim device, an
exfiltration bundle format, disguise on the attacker device, and three
scripted end-to-end scenarios.

Bundle file format (bit-exact, UTF-8, LF line endings, no trailing
whitespace):

    TOKENBUNDLE v1
    exported_at=<decimal epoch>
    tgt=<base64>
    ott=<base64>        (zero or more lines)

Scenarios operate on a harness world and return an AttackOutcome whose
``victim_quota_consumed`` is the victim-TGT ledger delta caused by the
attacker. They detect defenses by failing with the blocking layer's
error code rather than special-casing configuration.
"""

from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass, field
from typing import Optional

from . import blindsig
from .client import Caller, ClientDevice, CredentialStore, OTT_SERVICE_PREFIX, TGT_SERVICE_NAME
from .errors import BadTokenLength, MalformedBundle, RateLimited, ServiceUnavailable, TestbedError
from .tokens import TOKEN_LEN, TokenKind, make_token_input, parse_token

BUNDLE_HEADER = "TOKENBUNDLE v1"


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtractionMode:
    """How the malicious logic gets past the store's gate."""

    label: str
    user_approves: bool
    privileged: bool = False


def plain_prompt(user_approves: bool) -> ExtractionMode:
    """The store's own prompt is shown; the victim answers it."""
    return ExtractionMode("plain-prompt", user_approves)


# victim is phished for credentials; the real prompt is never shown
FAKE_PROMPT = ExtractionMode("fake-prompt", True)
# the approval window is bypassed outright; no victim interaction at all
PROMPT_BYPASS = ExtractionMode("prompt-bypass", True)
# privileged (kernel-level) read that ignores the entitlement gate
ENTITLEMENT_BYPASS = ExtractionMode("entitlement-bypass", True, privileged=True)


@dataclass
class TokenBundle:
    """The attacker's export artifact: one TGT plus cached OTTs."""

    version: int
    exported_at: int
    tgt: bytes
    otts: list[bytes] = field(default_factory=list)

    def __post_init__(self):
        for raw in [self.tgt] + list(self.otts):
            if len(raw) != TOKEN_LEN:
                raise BadTokenLength(f"bundle token is {len(raw)} bytes, want {TOKEN_LEN}")
            parse_token(raw)


def extract(victim_store: CredentialStore, mode: ExtractionMode,
            now: int = 0) -> TokenBundle:
    """Read the stored token pair under the tier rules; propagates the
    store's denial when a hardened tier (or the victim) blocks it."""
    caller = Caller(caller_id="malicious-app",
                    user_approves=mode.user_approves,
                    privileged=mode.privileged)
    tgt_bytes = victim_store.read(TGT_SERVICE_NAME, caller)
    indexed = []
    for name in victim_store.names(caller):
        if name.startswith(OTT_SERVICE_PREFIX):
            indexed.append((int(name[len(OTT_SERVICE_PREFIX):]), name))
    otts = [victim_store.read(name, caller) for _, name in sorted(indexed)]
    return TokenBundle(version=1, exported_at=now, tgt=tgt_bytes, otts=otts)


# ---------------------------------------------------------------------------
# bundle wire format
# ---------------------------------------------------------------------------

def export_bundle(bundle: TokenBundle) -> bytes:
    lines = [BUNDLE_HEADER,
             f"exported_at={bundle.exported_at}",
             f"tgt={base64.b64encode(bundle.tgt).decode()}"]
    lines += [f"ott={base64.b64encode(raw).decode()}" for raw in bundle.otts]
    return "\n".join(lines).encode("utf-8")


def import_bundle(data: bytes) -> TokenBundle:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as err:
        raise MalformedBundle("bundle is not UTF-8 text") from err
    if text.endswith("\n"):
        text = text[:-1]
    lines = text.split("\n")
    if len(lines) < 3 or lines[0] != BUNDLE_HEADER:
        raise MalformedBundle("missing or wrong header line")
    if not lines[1].startswith("exported_at="):
        raise MalformedBundle("missing exported_at line")
    try:
        exported_at = int(lines[1].split("=", 1)[1])
    except ValueError as err:
        raise MalformedBundle("exported_at is not a decimal epoch") from err
    if not lines[2].startswith("tgt="):
        raise MalformedBundle("missing tgt line")

    def decode(value: str) -> bytes:
        try:
            return base64.b64decode(value, validate=True)
        except binascii.Error as err:
            raise MalformedBundle("invalid base64 token payload") from err

    tgt = decode(lines[2].split("=", 1)[1])
    otts = []
    for line in lines[3:]:
        if not line.startswith("ott="):
            raise MalformedBundle(f"unexpected line {line!r}")
        otts.append(decode(line.split("=", 1)[1]))
    return TokenBundle(version=1, exported_at=exported_at, tgt=tgt, otts=otts)


# ---------------------------------------------------------------------------
# disguise
# ---------------------------------------------------------------------------

def disguise(attacker_dev: ClientDevice, bundle: TokenBundle) -> None:
    """Overwrite the attacker's own stored tokens with the victim's; the
    attacker's fetcher then reuses the imported pair as-is."""
    caller = attacker_dev.daemon_caller
    store = attacker_dev.store
    stale = [n for n in store.names(caller)
             if n == TGT_SERVICE_NAME or n.startswith(OTT_SERVICE_PREFIX)]
    for name in stale:
        store.delete(name, caller)
    store.write(TGT_SERVICE_NAME, bundle.tgt, caller)
    for index, raw in enumerate(bundle.otts):
        store.write(f"{OTT_SERVICE_PREFIX}{index}", raw, caller)
    attacker_dev.adopt_store_pair(origin="imported")


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

@dataclass
class AttackOutcome:
    succeeded: bool = False
    requests_made: int = 0
    victim_quota_consumed: int = 0
    notes: list[str] = field(default_factory=list)
    blocking_layer: Optional[str] = None
    extras: dict[str, str] = field(default_factory=dict)

    def note(self, message: str) -> None:
        self.notes.append(message)


def _drain_victim_cache(victim: ClientDevice, world, keep: int) -> int:
    """Victim uses the service normally until ``keep`` OTTs remain cached."""
    used = 0
    while victim.pair is not None and len(victim.pair.otts) > keep:
        victim.issue_request(b"victim traffic %d" % used, world.clock.now)
        used += 1
    return used


def redeem_and_drop(world, tgt, now: int, max_batches: int = 1000):
    """Grind the TGS with redemptions and discard every signature; stops at
    the rate limiter. Returns (total_redeemed, batches, RateLimited error)."""
    redeemed, batches = 0, 0
    challenge = world.challenges[TokenKind.OTT]
    while batches < max_batches:
        key_id, public_key = world.keyset.active_public(TokenKind.OTT, now)
        blinded = []
        for _ in range(world.config.ott_batch_target):
            token_input = make_token_input(TokenKind.OTT, world.rng.randbytes(32),
                                           challenge, key_id)
            message, _state = blindsig.blind(token_input.data, public_key, world.rng)
            blinded.append(message)
        try:
            world.send_redeem(tgt, blinded, {"device_id": "attacker-rig"}, now)
        except RateLimited as err:
            return redeemed, batches, err
        redeemed += len(blinded)
        batches += 1
    raise RuntimeError("rate limiter never engaged")


def scenario_baseline_theft(world, n_requests: int = 10, cache_fill: int = 0,
                            mode: Optional[ExtractionMode] = None) -> AttackOutcome:
    """Extract -> exfiltrate -> disguise -> spend as the victim.

    ``cache_fill`` is the victim's cached-OTT count at theft time; the
    default (0, a victim that has used today's batch) makes every token the
    attacker spends traceable to a redemption the attacker itself caused.
    """
    mode = mode or plain_prompt(True)
    outcome = AttackOutcome()
    now = world.clock.now
    victim = world.ensure_device("victim")
    attacker = world.ensure_device("attacker")

    victim.fetch_linked_token_pair(now)
    used = _drain_victim_cache(victim, world, keep=cache_fill)
    outcome.note(f"victim fetched a token pair and made {used} requests")
    victim_digest = victim.pair.tgt.digest()
    ledger_base = world.ledger.lifetime_redeemed(victim_digest)

    try:
        bundle = extract(victim.store, mode, now=now)
    except TestbedError as err:
        outcome.blocking_layer = err.code
        outcome.note(f"extraction blocked: {err.code}")
        return outcome
    outcome.note(f"extracted bundle with {len(bundle.otts)} cached OTTs ({mode.label})")

    bundle = import_bundle(export_bundle(bundle))  # exfiltration roundtrip
    disguise(attacker, bundle)
    outcome.note("attacker store overwritten with the victim pair")

    topup_base = attacker.topup_redeemed_total
    for i in range(n_requests):
        try:
            attacker.issue_request(b"attacker prompt %d" % i, world.clock.now)
            outcome.requests_made += 1
        except TestbedError as err:
            outcome.blocking_layer = err.code
            outcome.note(f"attacker request {i} blocked: {err.code}")
            break

    attacker_topups = attacker.topup_redeemed_total - topup_base
    delta = world.ledger.lifetime_redeemed(victim_digest) - ledger_base
    outcome.victim_quota_consumed = delta
    attacker_origin_charged = any(d in world.ledger.entries
                                  for d in attacker.issued_tgt_digests)
    outcome.extras["attacker_topup_redeemed"] = str(attacker_topups)
    outcome.extras["attacker_origin_in_ledger"] = str(attacker_origin_charged).lower()
    outcome.note(f"victim ledger charged {delta} redemptions by the attacker")
    outcome.succeeded = (outcome.requests_made == n_requests
                         and delta == attacker_topups
                         and not attacker_origin_charged)
    return outcome


def scenario_revive_banned(world, n_requests: int = 8, cache_fill: int = 5,
                           mode: Optional[ExtractionMode] = None) -> AttackOutcome:
    """A fully locked-out attacker (own quota exhausted, device banned from
    issuance) regains service by importing the victim's bundle.

    When the world's profile shortens the TGT key lifetime, the attacker
    sits on the stolen bundle for one lifetime plus an hour before using
    it, which is where the rotation defense bites."""
    mode = mode or plain_prompt(True)
    outcome = AttackOutcome()
    now = world.clock.now
    victim = world.ensure_device("victim")
    attacker = world.ensure_device("attacker")

    victim.fetch_linked_token_pair(now)
    _drain_victim_cache(victim, world, keep=cache_fill)
    victim_digest = victim.pair.tgt.digest()
    ledger_base = world.ledger.lifetime_redeemed(victim_digest)

    try:
        bundle = extract(victim.store, mode, now=now)
    except TestbedError as err:
        outcome.blocking_layer = err.code
        outcome.note(f"extraction blocked: {err.code}")
        return outcome
    outcome.note(f"extracted bundle with {len(bundle.otts)} cached OTTs")

    # phase 1: burn the attacker's own allowance
    attacker.fetch_linked_token_pair(now)
    _, batches, limited = redeem_and_drop(world, attacker.pair.tgt, now)
    outcome.note(f"own quota exhausted after {batches} extra batches: RateLimited "
                 f"until t={limited.cooldown_until}")

    # phase 2: grind fresh TGTs until the identity service bans the device
    attacker.discard_tokens()
    grinds = 0
    banned = None
    for _ in range(world.config.tgt_issuance_ban_threshold + 2):
        try:
            attacker.ensure_tgt(now, force=True)
            grinds += 1
        except TestbedError as err:
            banned = err
            break
    if banned is None or banned.code != "IssuerBanned":
        outcome.note("identity service never banned the device")
        return outcome
    attacker.discard_tokens()
    outcome.note(f"identity ban after {grinds} fresh issuances: {banned.code}")

    # locked out on every path without the victim's tokens
    locked_out = 0
    try:
        attacker.fetch_linked_token_pair(world.clock.now)
    except TestbedError as err:
        locked_out += 1
        outcome.note(f"pre-import token fetch fails: {err.code}")
    try:
        attacker.issue_request(b"pre-import probe", world.clock.now)
    except TestbedError as err:
        locked_out += 1
        outcome.note(f"pre-import request fails: {err.code}")
    outcome.extras["locked_out_steps"] = str(locked_out)

    delay = 0
    if world.profile.tgt_key_lifetime_override is not None:
        delay = world.profile.tgt_key_lifetime_override + 3600
        world.advance(delay)
        outcome.note(f"attacker delays {delay}s before using the stolen bundle")

    disguise(attacker, import_bundle(export_bundle(bundle)))
    topup_base = attacker.topup_redeemed_total
    for i in range(n_requests):
        try:
            attacker.issue_request(b"revived prompt %d" % i, world.clock.now)
            outcome.requests_made += 1
        except TestbedError as err:
            outcome.blocking_layer = err.code
            outcome.note(f"post-import request {i} blocked: {err.code}")
            break

    topups = attacker.topup_redeemed_total - topup_base
    outcome.victim_quota_consumed = (world.ledger.lifetime_redeemed(victim_digest)
                                     - ledger_base)
    outcome.extras["post_import_topup_redeemed"] = str(topups)
    outcome.note(f"post-import: {outcome.requests_made} requests, "
                 f"{topups} OTTs topped up under the victim TGT")
    outcome.succeeded = (locked_out == 2
                         and outcome.requests_made == n_requests
                         and topups >= 1)
    return outcome


def scenario_dos(world, mode: Optional[ExtractionMode] = None) -> AttackOutcome:
    """Burn the victim's quota by redeeming and dropping OTTs; no gateway
    spend ever happens. The victim is left unable to top up until the
    cooldown lapses."""
    mode = mode or plain_prompt(True)
    outcome = AttackOutcome()
    now = world.clock.now
    victim = world.ensure_device("victim")

    victim.fetch_linked_token_pair(now)
    _drain_victim_cache(victim, world, keep=0)
    victim_digest = victim.pair.tgt.digest()
    ledger_base = world.ledger.lifetime_redeemed(victim_digest)

    try:
        bundle = extract(victim.store, mode, now=now)
    except TestbedError as err:
        outcome.blocking_layer = err.code
        outcome.note(f"extraction blocked: {err.code}")
        return outcome

    stolen_tgt = parse_token(bundle.tgt)
    spent_before = len(world.spent)
    redeemed, batches, limited = redeem_and_drop(world, stolen_tgt, world.clock.now)
    spent_delta = len(world.spent) - spent_before
    outcome.victim_quota_consumed = (world.ledger.lifetime_redeemed(victim_digest)
                                     - ledger_base)
    outcome.extras["loop_redeemed"] = str(redeemed)
    outcome.extras["loop_spent_delta"] = str(spent_delta)
    outcome.note(f"redeem-and-drop burned {redeemed} redemptions in {batches} batches "
                 f"without spending any; cooldown until t={limited.cooldown_until}")

    starved = False
    try:
        victim.issue_request(b"victim probe during attack", world.clock.now)
        outcome.note("victim request unexpectedly succeeded")
    except ServiceUnavailable:
        starved = True
        outcome.note("victim sees the service as unavailable")
    except TestbedError as err:
        outcome.note(f"victim request failed with {err.code} instead of unavailability")
    outcome.extras["victim_unavailable"] = str(starved).lower()

    world.advance(world.config.cooldown_period)
    recovered = False
    try:
        victim.issue_request(b"victim probe after cooldown", world.clock.now)
        recovered = True
        outcome.note("victim service restored after one cooldown period")
    except TestbedError as err:
        outcome.note(f"victim still blocked after cooldown: {err.code}")
    outcome.extras["victim_recovered"] = str(recovered).lower()

    outcome.succeeded = starved and spent_delta == 0 and redeemed > 0
    return outcome
