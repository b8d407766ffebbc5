"""Command line scenario runner.

    testbed run <scenario> [options]

Exit codes: 0 when the scenario's expected verdict holds (attack success
under the baseline, attack blocked under the named defense), 1 when it
does not, 2 on usage errors.
"""

from __future__ import annotations

import sys
from dataclasses import replace

from .client import StoreTier
from .defense import DefenseProfile
from .harness import SCENARIOS, World, expected_verdict, run_scenario
from .services import ServiceConfig

_TIERS = {
    "login": StoreTier.LOGIN_KEYCHAIN,
    "entitlement": StoreTier.ENTITLEMENT_PROTECTED,
    "sealed": StoreTier.HARDWARE_SEALED,
}


def build_parser():
    import argparse

    parser = argparse.ArgumentParser(
        prog="testbed",
        description="Run token-pipeline attack/defense scenarios on a simulated world.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario and print its report")
    run.add_argument("scenario", help=f"one of: {', '.join(SCENARIOS)}")
    run.add_argument("--seed", type=int, default=1, help="world RNG seed")
    run.add_argument("--quota", type=int, default=None,
                     help="OTT redemptions allowed per window per TGT")
    run.add_argument("--batch", type=int, default=None,
                     help="target OTT cache size / redemption batch size")
    run.add_argument("--tgt-key-lifetime", type=int, default=None, metavar="SECS",
                     help="TGT signing key lifetime; engages the rotation defense")
    run.add_argument("--ott-key-lifetime", type=int, default=None, metavar="SECS")
    run.add_argument("--cooldown", type=int, default=None, metavar="SECS",
                     help="rate-limit cooldown period")
    run.add_argument("--store-tier", choices=sorted(_TIERS), default="login")
    run.add_argument("--device-binding", action="store_true",
                     help="commit TGTs to a device key and verify per request")
    run.add_argument("--fresh-tgt", action="store_true",
                     help="re-issue on every launch; never persist tokens")
    run.add_argument("--enforce-tgt-validation", action="store_true",
                     help="abort requests whose TGT fails validation")
    run.add_argument("--report", metavar="PATH", default=None,
                     help="also write the report file here")
    run.add_argument("--log", metavar="PATH", default=None,
                     help="also dump the raw event log here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)

    if args.scenario not in SCENARIOS:
        print(f"unknown scenario {args.scenario!r}; known: {', '.join(SCENARIOS)}",
              file=sys.stderr)
        return 2

    try:
        config = ServiceConfig()
        overrides = {}
        if args.quota is not None:
            overrides["quota_limit"] = args.quota
        if args.batch is not None:
            overrides["ott_batch_target"] = args.batch
        if args.ott_key_lifetime is not None:
            overrides["ott_key_lifetime"] = args.ott_key_lifetime
        if args.cooldown is not None:
            overrides["cooldown_period"] = args.cooldown
        if args.enforce_tgt_validation:
            overrides["enforce_tgt_validation"] = True
        if overrides:
            config = replace(config, **overrides)
        profile = DefenseProfile(
            store_tier=_TIERS[args.store_tier],
            tgt_key_lifetime_override=args.tgt_key_lifetime,
            fresh_tgt_on_launch=args.fresh_tgt,
            device_binding_enabled=args.device_binding,
        )
    except ValueError as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return 2

    world = World(args.seed, config=config, profile=profile)
    report = run_scenario(args.scenario, world)
    sys.stdout.write(report.render())
    if args.report:
        report.write(args.report)
    if args.log:
        world.log.dump(args.log)

    expected = expected_verdict(args.scenario, profile)
    actual = "blocked" if report.verdict.startswith("blocked") else report.verdict
    return 0 if actual == expected else 1


if __name__ == "__main__":
    sys.exit(main())
