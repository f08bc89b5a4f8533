"""Command line front end: property sweeps, zone walks, replays, traces."""

from __future__ import annotations

import argparse
import json
import logging
import pathlib
import sys
from typing import Dict, List, Optional, Sequence

from . import harness
from .harness import Scenario, ScenarioError
from .names import parse_name
from .properties import PROPERTIES

log = logging.getLogger("dnssecsim")


def _parse_ids(text: str) -> List[int]:
    """Property/seed selections: "4", "1,3,9", "1-12", or a mix."""
    out: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    seen = set()
    return [x for x in out if not (x in seen or seen.add(x))]


def _load(name: Optional[str]) -> Optional[Scenario]:
    if name is None:
        return None
    if pathlib.Path(name).exists():
        return harness.load_scenario(name)
    return harness.load_packaged_scenario(name)


def cmd_check(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    if args.props:
        props = _parse_ids(args.props)
    elif scenario is not None and scenario.properties:
        props = list(scenario.properties)
    else:
        props = sorted(PROPERTIES)
    unknown = [p for p in props if p not in PROPERTIES]
    if unknown:
        print("unknown property ids: %s" % unknown, file=sys.stderr)
        return 2
    seeds = _parse_ids(args.seeds)

    groups: Dict[tuple, List[int]] = {}
    for pid in props:
        spec = PROPERTIES[pid]
        key = (spec.scenario if scenario is None else "<given>",
               repr(spec.variants), pid >= 13)
        groups.setdefault(key, []).append(pid)

    verdicts: Dict[int, harness.Verdict] = {}
    for key, pids in groups.items():
        log.info("checking %s over %d seeds", pids, len(seeds))
        outcomes = harness.property_corpus(pids[0], seeds, scenario=scenario)
        verdicts.update(harness.check_properties(pids, outcomes))

    ordered = [verdicts[pid] for pid in sorted(verdicts)]
    print(harness.render_verdicts(ordered, fmt=args.format))

    deviations = []
    for pid in sorted(verdicts):
        expected = None
        if scenario is not None:
            expected = scenario.expected.get(pid)
        if expected is None:
            expected = PROPERTIES[pid].expected
        if verdicts[pid].result != expected:
            deviations.append((pid, expected, verdicts[pid].result))
    for pid, expected, got in deviations:
        print("property %d expected %s, got %s" % (pid, expected, got),
              file=sys.stderr)

    if args.report:
        payload = {
            "verdicts": [v.to_dict() for v in ordered],
            "deviations": [{"id": pid, "expected": exp, "got": got}
                           for pid, exp, got in deviations],
        }
        pathlib.Path(args.report).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 1 if deviations else 0


def cmd_enumerate(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario or "enumeration")
    apex = parse_name(args.apex)
    try:
        result = harness.enumerate_zone(scenario, apex, budget=args.budget)
    except harness.EnumerationBlocked as blocked:
        print("walk blocked after %d queries; %d hashed span endpoints seen"
              % (blocked.queries, len(blocked.hashes)))
        return 0
    print("recovered %d names in %d queries:"
          % (len(result.names), result.queries))
    for name in sorted(result.names, key=lambda n: n.sort_key()):
        print("  %s" % name.text())
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario) if args.scenario else None
    _, report = harness.replay_mixed_gap(scenario=scenario,
                                         policy=args.policy, seed=args.seed)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario or "baseline")
    if args.seed is not None:
        import dataclasses
        scenario = dataclasses.replace(scenario, seed=args.seed)
    text = harness.dump_trace(harness.run(scenario).trace)
    if args.out:
        pathlib.Path(args.out).write_text(text + "\n")
        log.info("wrote %d events to %s", text.count("\n") + 1, args.out)
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dnssecsim",
        description="Explore signed-zone resolution scenarios and check "
                    "trace properties over seeded schedules.")
    parser.add_argument("--verbose", action="store_true",
                        help="chatty progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="sweep property verdicts over seeds")
    check.add_argument("--scenario", help="scenario file or packaged name")
    check.add_argument("--props", help="ids, e.g. 1-12 or 13,14,15")
    check.add_argument("--seeds", default="0-99",
                       help="scheduler seeds, e.g. 0-499 (default 0-99)")
    check.add_argument("--format", choices=["table", "json-lines"],
                       default="table")
    check.add_argument("--report", help="write a JSON report here")
    check.set_defaults(func=cmd_check)

    walk = sub.add_parser("enumerate", help="walk a zone's denial chain")
    walk.add_argument("--scenario", help="scenario file or packaged name")
    walk.add_argument("--apex", default="example")
    walk.add_argument("--budget", type=int)
    walk.set_defaults(func=cmd_enumerate)

    replay = sub.add_parser("replay",
                            help="replay the mixed-denial gap scenario")
    replay.add_argument("--scenario", help="scenario file or packaged name")
    replay.add_argument("--policy", choices=["Accept", "Servfail"])
    replay.add_argument("--seed", type=int)
    replay.set_defaults(func=cmd_replay)

    trace = sub.add_parser("trace", help="dump one run's event trace")
    trace.add_argument("--scenario", help="scenario file or packaged name")
    trace.add_argument("--seed", type=int)
    trace.add_argument("--out", help="write here instead of stdout")
    trace.set_defaults(func=cmd_trace)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as err:
        print("scenario error: %s" % err, file=sys.stderr)
        return 2
    except (KeyError, ValueError) as err:
        print("error: %s" % err, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
