import random

import pytest

from tokenbed import blindsig
from tokenbed.defense import DefenseProfile
from tokenbed.errors import (
    DoubleSpend,
    ExpiredToken,
    Ineligible,
    InvalidToken,
    IssuerBanned,
    RateLimited,
    TGTValidationFailed,
    UnknownKey,
)
from tokenbed.harness import World
from tokenbed.services import (
    DAY,
    DeviceAttestation,
    QuotaLedger,
    RelayedRequest,
    ServiceConfig,
    SpentSet,
    validate_token,
)
from tokenbed.tokens import TokenKind, parse_token


def fresh_world(seed=1, **config_overrides):
    config = ServiceConfig(**config_overrides) if config_overrides else None
    return World(seed, config=config)


# --- identity service -------------------------------------------------------

def test_issued_tgt_validates_end_to_end():
    world = fresh_world()
    victim = world.ensure_device("victim")
    tgt = victim.ensure_tgt(0)
    key = validate_token(tgt, world.keyset.kind_keys(TokenKind.TGT), 0)
    assert key.key_id == tgt.token_key_id


def test_ineligible_device_is_refused():
    world = fresh_world()
    fake = world.ensure_device("fake", platform_genuine=False)
    with pytest.raises(Ineligible):
        fake.ensure_tgt(0)


def test_issuance_ban_after_threshold():
    world = fresh_world()
    grinder = world.ensure_device("grinder")
    threshold = world.config.tgt_issuance_ban_threshold
    for _ in range(threshold):
        grinder.ensure_tgt(0, force=True)
    with pytest.raises(IssuerBanned) as excinfo:
        grinder.ensure_tgt(0, force=True)
    assert excinfo.value.banned_until == world.config.cooldown_period
    # other devices are unaffected
    world.ensure_device("bystander").ensure_tgt(0)


def test_banned_device_can_issue_after_ban_lapses():
    world = fresh_world()
    grinder = world.ensure_device("grinder")
    for _ in range(world.config.tgt_issuance_ban_threshold):
        grinder.ensure_tgt(0, force=True)
    with pytest.raises(IssuerBanned):
        grinder.ensure_tgt(0, force=True)
    world.advance(world.config.cooldown_period + world.config.quota_window)
    grinder.ensure_tgt(world.clock.now, force=True)


# --- token granting service --------------------------------------------------

def test_redeem_charges_ledger_and_signs_batch():
    world = fresh_world()  # quota 100, batch 50
    victim = world.ensure_device("victim")
    pair = victim.fetch_linked_token_pair(0)
    assert len(pair.otts) == 50
    entry = world.ledger.entries[pair.tgt.digest()]
    assert entry.redeemed_count == 50  # 50 of 100 remaining


def test_third_batch_hits_rate_limiter_with_one_day_cooldown():
    world = fresh_world()
    victim = world.ensure_device("victim")
    victim.fetch_linked_token_pair(0)          # batch 1: 50/100
    tgt = victim.pair.tgt
    from tokenbed.attack import redeem_and_drop
    redeemed, batches, limited = redeem_and_drop(world, tgt, 0)
    assert batches == 1 and redeemed == 50     # batch 2 accepted: 100/100
    assert limited.cooldown_until == DAY       # batch 3 refused, cooldown ~next day


def test_redeem_rejects_garbage_tgt():
    world = fresh_world()
    rng = random.Random(0)
    garbage = parse_token(rng.randbytes(354))
    key_id, public_key = world.keyset.active_public(TokenKind.OTT, 0)
    blinded, _ = blindsig.blind(b"anything", public_key, rng)
    with pytest.raises((InvalidToken, ExpiredToken)):
        world.tgs.redeem(garbage, [blinded], 0)


def test_redeem_rejects_expired_tgt():
    world = fresh_world()
    victim = world.ensure_device("victim")
    victim.fetch_linked_token_pair(0)
    tgt = victim.pair.tgt
    world.advance(world.config.tgt_key_lifetime + 1)
    key_id, public_key = world.keyset.active_public(TokenKind.OTT, world.clock.now)
    blinded, _ = blindsig.blind(b"anything", public_key, random.Random(0))
    with pytest.raises(ExpiredToken):
        world.tgs.redeem(tgt, [blinded], world.clock.now)


def test_redeem_requires_nonempty_batch():
    world = fresh_world()
    victim = world.ensure_device("victim")
    tgt = victim.ensure_tgt(0)
    with pytest.raises(ValueError):
        world.tgs.redeem(tgt, [], 0)


# --- relay --------------------------------------------------------------------

def test_relay_strips_metadata_and_preserves_payload_and_tokens():
    world = fresh_world()
    victim = world.ensure_device("victim")
    tgt = victim.ensure_tgt(0)
    request = RelayedRequest(payload=b"hello", tokens=(tgt,),
                             metadata={"device_id": victim.device_id,
                                       "source_addr": victim.source_addr})
    forwarded = world.relay.forward(request, 0)
    assert forwarded.metadata == {}
    assert forwarded.payload == b"hello"
    assert forwarded.tokens[0].serialize() == tgt.serialize()


# --- gateway -------------------------------------------------------------------

def test_gateway_consumes_then_rejects_double_spend():
    world = fresh_world()
    victim = world.ensure_device("victim")
    pair = victim.fetch_linked_token_pair(0)
    ott = pair.otts[0]
    world.gateway.validate_ott(ott, 0)
    assert len(world.spent) == 1
    with pytest.raises(DoubleSpend):
        world.gateway.validate_ott(ott, 0)
    assert len(world.spent) == 1


def test_gateway_rejects_expired_ott():
    world = fresh_world()
    victim = world.ensure_device("victim")
    pair = victim.fetch_linked_token_pair(0)
    ott = pair.otts[0]
    world.advance(world.config.ott_key_lifetime + 3600)  # 13h: OTT key gone
    with pytest.raises(ExpiredToken):
        world.gateway.validate_ott(ott, world.clock.now)
    # TGT key is still inside its window
    validate_token(pair.tgt, world.keyset.kind_keys(TokenKind.TGT), world.clock.now)


def test_gateway_rejects_unknown_key_token():
    world = fresh_world()
    garbage = parse_token(random.Random(1).randbytes(354))
    with pytest.raises(InvalidToken):
        world.gateway.validate_ott(garbage, 0)


# --- compute node ----------------------------------------------------------------

def test_node_bypass_and_enforcement_semantics():
    # enforcement off: garbage TGT -> success response, failure only logged
    world = fresh_world()
    garbage = parse_token(random.Random(2).randbytes(354))
    relaxed = world.node.handle(b"prompt", garbage, 0)
    assert relaxed.status == "ok"
    bypassed = [e for e in world.log.for_service("node")
                if e.code == "TGT_INVALID_BYPASSED"]
    assert len(bypassed) == 1

    # same payload with a valid TGT: the response is identical
    victim = world.ensure_device("victim")
    tgt = victim.ensure_tgt(0)
    strict_ok = world.node.handle(b"prompt", tgt, 0)
    assert strict_ok == relaxed

    # enforcement on: garbage TGT aborts, valid TGT still succeeds
    enforcing = fresh_world(enforce_tgt_validation=True)
    victim2 = enforcing.ensure_device("victim")
    tgt2 = victim2.ensure_tgt(0)
    with pytest.raises(TGTValidationFailed):
        enforcing.node.handle(b"prompt", garbage, 0)
    assert enforcing.node.handle(b"prompt", tgt2, 0).status == "ok"


# --- validate_token ----------------------------------------------------------------

def test_validate_token_unknown_key():
    world = fresh_world()
    victim = world.ensure_device("victim")
    tgt = victim.ensure_tgt(0)
    zeroed = parse_token(tgt.serialize()[:66] + b"\x00" * 32 + tgt.authenticator)
    with pytest.raises(UnknownKey):
        validate_token(zeroed, world.keyset.kind_keys(TokenKind.TGT), 0)


def test_expiry_is_window_edge_exact():
    world = fresh_world()
    victim = world.ensure_device("victim")
    tgt = victim.ensure_tgt(0)
    end = world.config.tgt_key_lifetime
    validate_token(tgt, world.keyset.kind_keys(TokenKind.TGT), end - 1)
    with pytest.raises(ExpiredToken):
        validate_token(tgt, world.keyset.kind_keys(TokenKind.TGT), end)


# --- key rotation -------------------------------------------------------------------

def test_rotation_mints_successor_and_retires_old():
    world = fresh_world()
    victim = world.ensure_device("victim")
    tgt = victim.ensure_tgt(0)
    life = world.config.tgt_key_lifetime
    world.advance(life)
    # new key signs now; the old one is expired
    active = world.keyset.signing_key(TokenKind.TGT, world.clock.now)
    assert active.key_id != tgt.token_key_id
    with pytest.raises(ExpiredToken):
        validate_token(tgt, world.keyset.kind_keys(TokenKind.TGT), world.clock.now)


def test_rotation_is_idempotent_at_an_instant():
    world = fresh_world()
    world.advance(world.config.ott_key_lifetime)
    first = world.keyset.rotate(world.clock.now)
    second = world.keyset.rotate(world.clock.now)
    assert first.minted == [] or second.minted == []
    assert second.minted == [] and second.retired == []


def test_keyset_always_has_a_valid_key_per_kind():
    world = fresh_world()
    for step in (0, 3600, DAY, 3 * DAY):
        world.advance(step)
        now = world.clock.now
        for kind in (TokenKind.TGT, TokenKind.OTT):
            key = world.keyset.signing_key(kind, now)
            assert key.valid_at(now)


# --- quota ledger ---------------------------------------------------------------------

def test_reset_if_cooled_behavior():
    ledger = QuotaLedger()
    config = ServiceConfig()
    digest = b"\x11" * 32
    ledger.charge(digest, 100, 0, config)
    with pytest.raises(RateLimited) as excinfo:
        ledger.charge(digest, 1, 10, config)
    cooldown_until = excinfo.value.cooldown_until
    assert cooldown_until == 10 + config.cooldown_period

    before = ledger.reset_if_cooled(digest, cooldown_until - 1)
    assert before.redeemed_count == 100 and before.cooldown_until == cooldown_until

    after = ledger.reset_if_cooled(digest, cooldown_until)
    assert after.redeemed_count == 0 and after.cooldown_until is None
    ledger.charge(digest, 5, cooldown_until, config)  # redemption possible again


def test_reset_if_cooled_unknown_digest_creates_fresh_entry():
    ledger = QuotaLedger()
    entry = ledger.reset_if_cooled(b"\x22" * 32, 7)
    assert entry.redeemed_count == 0 and entry.cooldown_until is None


def test_quota_window_conservation():
    ledger = QuotaLedger()
    config = ServiceConfig(quota_limit=100)
    digest = b"\x33" * 32
    accepted = 0
    rng = random.Random(0)
    for _ in range(40):
        amount = rng.randrange(1, 20)
        try:
            ledger.charge(digest, amount, 0, config)
            accepted += amount
        except RateLimited:
            break
    assert accepted <= config.quota_limit
    assert ledger.entries[digest].redeemed_count == accepted


def test_quota_window_rolls_over_without_cooldown():
    ledger = QuotaLedger()
    config = ServiceConfig()
    digest = b"\x44" * 32
    ledger.charge(digest, 60, 0, config)
    # next window: counter restarts without any cooldown having been set
    ledger.charge(digest, 60, config.quota_window, config)
    assert ledger.entries[digest].redeemed_count == 60


# --- spent set ---------------------------------------------------------------------------

def test_spent_set_insert_is_check_then_act():
    spent = SpentSet()
    assert spent.insert(b"\x01" * 32)
    assert not spent.insert(b"\x01" * 32)
    assert len(spent) == 1
    assert (b"\x01" * 32) in spent


# --- unlinkability -----------------------------------------------------------------------

def test_no_device_id_downstream_of_the_relay():
    world = fresh_world()
    victim = world.ensure_device("victim")
    victim.fetch_linked_token_pair(0)
    for i in range(5):
        victim.issue_request(b"prompt %d" % i, 0)
    downstream = (world.log.for_service("tgs") + world.log.for_service("gateway")
                  + world.log.for_service("node") + world.log.for_service("relay"))
    assert downstream, "expected downstream traffic"
    for event in downstream:
        for device_id in world.device_ids():
            assert device_id not in event.line()
    # the identity service legitimately sees the device
    identity_lines = "".join(e.line() for e in world.log.for_service("identity"))
    assert victim.device_id in identity_lines


def test_binding_required_at_issuance_when_enabled():
    world = World(1, profile=DefenseProfile(device_binding_enabled=True))
    victim = world.ensure_device("victim")
    tgt = victim.ensure_tgt(0)
    # the TGT nonce is the commitment to the device key
    import hashlib
    assert tgt.nonce == hashlib.sha256(victim.device_public_bytes).digest()

    from tokenbed.errors import DeviceMismatch
    rng = random.Random(3)
    key_id, public_key = world.keyset.active_public(TokenKind.TGT, 0)
    blinded, _ = blindsig.blind(b"x" * 98, public_key, rng)
    attestation = DeviceAttestation("device-rogue-1", True, b"\x05" * 32)
    with pytest.raises(DeviceMismatch):
        world.identity.issue_tgt(attestation, blinded, 0, commitment=b"\x00" * 32)
    with pytest.raises(DeviceMismatch):
        world.identity.issue_tgt(attestation, blinded, 0, commitment=None)
