import pytest

from tokenbed.defense import DefenseProfile
from tokenbed.client import StoreTier
from tokenbed.errors import UnknownScenario
from tokenbed.harness import (
    SCENARIOS,
    ScenarioReport,
    World,
    advance,
    expected_verdict,
    run_scenario,
    world_new,
)
from tokenbed.services import DAY, ServiceConfig
from tokenbed.tokens import TokenKind


def test_world_defaults_one_key_per_kind():
    world = world_new(1)
    (tgt_key,) = world.keyset.kind_keys(TokenKind.TGT)
    (ott_key,) = world.keyset.kind_keys(TokenKind.OTT)
    assert (tgt_key.valid_start, tgt_key.valid_end) == (0, 4 * DAY)
    assert (ott_key.valid_start, ott_key.valid_end) == (0, 12 * 3600)
    assert world.clock.now == 0


def test_same_seed_same_first_tgt_nonce():
    a = World(99).ensure_device("victim").ensure_tgt(0)
    b = World(99).ensure_device("victim").ensure_tgt(0)
    assert a.nonce == b.nonce
    assert a.serialize() == b.serialize()


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        World(1, config=ServiceConfig(quota_limit=0))
    with pytest.raises(ValueError):
        ServiceConfig(ott_batch_target=-5)


def test_advance_validates_and_is_monotone():
    world = World(1)
    with pytest.raises(ValueError):
        advance(world, -1)
    events_before = len(world.log.events)
    advance(world, 0)  # no-op
    assert world.clock.now == 0
    assert len(world.log.events) == events_before
    advance(world, 10)
    assert world.clock.now == 10


def test_advance_one_day_resets_a_cooling_quota_entry():
    world = World(1)
    victim = world.ensure_device("victim")
    victim.fetch_linked_token_pair(0)
    from tokenbed.attack import redeem_and_drop
    redeem_and_drop(world, victim.pair.tgt, 0)  # trips the limiter
    digest = victim.pair.tgt.digest()
    assert world.ledger.entries[digest].cooldown_until == DAY
    world.advance(DAY)
    assert world.ledger.entries[digest].cooldown_until is None
    assert world.ledger.entries[digest].redeemed_count == 0
    resets = [e for e in world.log.events if e.code == "QUOTA_RESET"]
    assert len(resets) == 1


def test_advance_13h_expires_ott_key_but_not_tgt_key():
    world = World(1)
    world.advance(13 * 3600)
    now = world.clock.now
    first_ott = world.keyset.kind_keys(TokenKind.OTT)[0]
    first_tgt = world.keyset.kind_keys(TokenKind.TGT)[0]
    assert not first_ott.valid_at(now)
    assert first_tgt.valid_at(now)


def test_run_scenario_unknown_name():
    with pytest.raises(UnknownScenario):
        run_scenario("bogus", World(1))


def test_run_scenario_consumes_the_world():
    world = World(1)
    run_scenario("pipeline-smoke", world)
    with pytest.raises(RuntimeError):
        run_scenario("pipeline-smoke", world)


def test_pipeline_smoke_metrics():
    report = run_scenario("pipeline-smoke", World(5))
    assert report.verdict == "succeeded"
    metrics = dict(report.metrics)
    assert metrics["tgt_issued"] == "1"
    assert metrics["otts_redeemed"] == "50"
    assert metrics["requests"] == "1"
    assert metrics["spent_set"] == "1"
    assert metrics["cache_after"] == "49"


def test_report_render_parse_roundtrip():
    report = run_scenario("baseline-theft", World(5))
    text = report.render()
    parsed = ScenarioReport.parse(text)
    assert parsed == report
    assert parsed.render() == text


def test_report_parse_rejects_malformed():
    with pytest.raises(ValueError):
        ScenarioReport.parse("not a report\n")
    with pytest.raises(ValueError):
        ScenarioReport.parse("REPORT v1 scenario=x seed=1\nverdict=ok\n")  # no events


def test_reports_are_deterministic_for_equal_seed_and_config():
    first = run_scenario("dos", World(12)).render()
    second = run_scenario("dos", World(12)).render()
    assert first == second


def test_different_seeds_differ():
    first = run_scenario("pipeline-smoke", World(1)).render()
    second = run_scenario("pipeline-smoke", World(2)).render()
    assert first != second


def test_expected_verdict_table():
    baseline = DefenseProfile.baseline()
    sealed = DefenseProfile(store_tier=StoreTier.HARDWARE_SEALED)
    binding = DefenseProfile(device_binding_enabled=True)
    rotated = DefenseProfile(tgt_key_lifetime_override=7200)
    fresh = DefenseProfile(fresh_tgt_on_launch=True)

    for scenario in SCENARIOS:
        if scenario in ("pipeline-smoke", "defense-matrix"):
            assert expected_verdict(scenario, baseline) == "succeeded"
    assert expected_verdict("baseline-theft", baseline) == "succeeded"
    assert expected_verdict("baseline-theft", sealed) == "blocked"
    assert expected_verdict("baseline-theft", binding) == "blocked"
    assert expected_verdict("baseline-theft", rotated) == "succeeded"
    assert expected_verdict("revive-banned", rotated) == "blocked"
    assert expected_verdict("dos", binding) == "succeeded"
    assert expected_verdict("dos", fresh) == "blocked"
