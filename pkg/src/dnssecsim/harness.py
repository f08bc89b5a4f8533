"""Scenario runner: loads scenario files, assembles signed topologies,
drives client and attacker activities under the seeded scheduler, and
checks verdicts over the resulting traces.

A scenario file (JSON, validated against fixtures/scenario.schema.json)
declares the zone topology, the resolver configuration, phased client
activities, attacker scripts, and the verdicts it expects. ``run`` produces
a RunOutcome bundling the trace with the ground truth the property
checkers compare against.
"""

from __future__ import annotations

import dataclasses
import importlib.resources
import json
import pathlib
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

import jsonschema

from . import crypto
from .adversary import Adversary, AttackerScript, Network, child_probe, probe_after
from .crypto import ContractViolation, NSEC3Params, keygen, nsec3_hash
from .names import (DomainName, Query, Rcode, RecordType, ResourceRecord,
                    ROOT, covers, covers_span, parse_name)
from .resolver import (Resolver, ResolverConfig, ResolutionError, TrustAnchor,
                       ValidatedResponse, denial_evidence_family)
from .scheduler import BudgetExceeded, Scheduler, Trace
from .zone import (Zone, build_mixed_chain, build_nsec_chain,
                   build_nsec3_chain, ds_for, find_gap_salt, load_zone,
                   rrset_message, sign_zone, strip_denial)


class ScenarioError(ValueError):
    """Scenario file malformed or out of contract with the schema."""


class EnumerationBlocked(Exception):
    """A walk hit a hashed denial chain; owner names stay hidden."""

    def __init__(self, queries: int, hashes: Set[str]) -> None:
        super().__init__("enumeration blocked after %d queries; %d hashed "
                         "spans observed" % (queries, len(hashes)))
        self.queries = queries
        self.hashes = set(hashes)


# --- scenario files ----------------------------------------------------------


@dataclass(frozen=True)
class ZoneDecl:
    file: str
    server: str
    apex: Optional[str] = None
    denial: str = "nsec"
    algorithms: Tuple[int, ...] = (8,)
    nsec3: Optional[dict] = None
    assignment: Optional[dict] = None
    gap_salt: Optional[dict] = None
    malicious_gap: Optional[Tuple[str, str]] = None


@dataclass(frozen=True)
class Activity:
    label: str
    steps: Tuple[dict, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    zones: Tuple[ZoneDecl, ...]
    phases: Tuple[Tuple[Activity, ...], ...]
    step_budget: int = 10000
    cache_enabled: bool = True
    nondet_expiry: bool = True
    cleanup_bound: int = 16
    activity_count: int = 4
    adversary: bool = True
    honest_servers: Tuple[str, ...] = ()
    resolver: ResolverConfig = ResolverConfig()
    attackers: Tuple[dict, ...] = ()
    expected: Dict[int, str] = field(default_factory=dict)
    properties: Tuple[int, ...] = ()
    path: Optional[pathlib.Path] = None


def _fixture_text(name: str) -> str:
    ref = importlib.resources.files("dnssecsim").joinpath("fixtures", name)
    return ref.read_text()


def _schema() -> dict:
    return json.loads(_fixture_text("scenario.schema.json"))


def load_scenario(path) -> Scenario:
    """Load and validate one scenario file."""
    path = pathlib.Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ScenarioError("cannot read scenario %s: %s" % (path, err))
    return scenario_from_dict(raw, path=path)


def load_packaged_scenario(name: str) -> Scenario:
    """Load a scenario shipped in the package fixtures, e.g. "baseline"."""
    if not name.endswith(".scn"):
        name += ".scn"
    try:
        raw = json.loads(_fixture_text(name))
    except FileNotFoundError:
        raise ScenarioError("no packaged scenario named %r" % name)
    return scenario_from_dict(raw, path=None)


def scenario_from_dict(raw: dict, path: Optional[pathlib.Path] = None) -> Scenario:
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as err:
        raise ScenarioError("scenario schema violation: %s" % err.message)

    zones = tuple(
        ZoneDecl(file=z["file"], server=z["server"], apex=z.get("apex"),
                 denial=z.get("denial", "nsec"),
                 algorithms=tuple(z.get("algorithms", [8])),
                 nsec3=z.get("nsec3"), assignment=z.get("assignment"),
                 gap_salt=z.get("gap_salt"),
                 malicious_gap=(tuple(z["malicious_gap"])
                                if z.get("malicious_gap") else None))
        for z in raw["topology"]["zones"])

    count = raw.get("activity_count", 4)
    phases = []
    for phase in raw["phases"]:
        activities = []
        for act in phase:
            steps = tuple(act["steps"])
            if act.get("replicate_clients"):
                activities.extend(
                    Activity("%s-%d" % (act["label"], i + 1), steps)
                    for i in range(count))
            else:
                activities.append(Activity(act["label"], steps))
        phases.append(tuple(activities))

    res = raw.get("resolver", {})
    resolver_cfg = ResolverConfig(
        supported_algorithms=frozenset(res.get("supported_algorithms",
                                               [8, 13])),
        downgrade_policy=res.get("downgrade_policy", "Strict"),
        cache_partitioning=res.get("cache_partitioning", "Unified"),
        mixed_denial_policy=res.get("mixed_denial_policy", "Accept"),
        max_depth=res.get("max_depth", 8))

    return Scenario(
        name=raw["name"], seed=raw["seed"], zones=zones, phases=tuple(phases),
        step_budget=raw.get("step_budget", 10000),
        cache_enabled=raw.get("cache_enabled", True),
        nondet_expiry=raw.get("nondet_expiry", True),
        cleanup_bound=raw.get("cleanup_bound", 16),
        activity_count=count,
        adversary=raw.get("adversary", True),
        honest_servers=tuple(raw.get("honest_servers", [])),
        resolver=resolver_cfg,
        attackers=tuple(raw.get("attackers", [])),
        expected={int(k): v for k, v in raw.get("expected", {}).items()},
        properties=tuple(raw.get("properties", [])),
        path=path)


# --- topology assembly -------------------------------------------------------


@dataclass
class Topology:
    zones: Dict[DomainName, Zone]
    servers: Dict[str, Zone]
    routes: Dict[DomainName, str]
    anchor: TrustAnchor


def _zone_text(scenario: Scenario, decl: ZoneDecl) -> str:
    if scenario.path is not None:
        candidate = scenario.path.parent / decl.file
        if candidate.exists():
            return candidate.read_text()
    return _fixture_text(decl.file)


def _nsec3_params(decl: ZoneDecl, apex: DomainName) -> NSEC3Params:
    cfg = decl.nsec3 or {}
    return NSEC3Params(algorithm=1, iterations=cfg.get("iterations", 0),
                       salt=cfg.get("salt", "salt-%s" % apex.text()))


def build_topology(scenario: Scenario) -> Topology:
    """Assemble and sign the scenario's zones.

    Zone files contribute only the data records; parsed denial records, key
    annotations, and DS tokens are stripped and rebuilt: fresh keys per
    zone, real DS records installed at every cut whose child is present,
    denial chains per the declared family, then signatures. Zones are
    processed deepest first so each parent digests its children's real keys.
    """
    loaded: List[Tuple[Zone, ZoneDecl]] = []
    for decl in scenario.zones:
        apex = parse_name(decl.apex) if decl.apex else None
        zone = load_zone(_zone_text(scenario, decl), apex=apex)
        strip_denial(zone)
        for (owner, rtype) in [k for k in zone.rrsets
                               if k[1] in (RecordType.DNSKEY, RecordType.DS,
                                           RecordType.RRSIG)]:
            zone.drop_rrset(owner, rtype)
        loaded.append((zone, decl))

    zones = {zone.apex: zone for zone, _ in loaded}
    if len(zones) != len(loaded):
        raise ScenarioError("two zone declarations share an apex")

    for zone, decl in sorted(loaded, key=lambda zd: -len(zd[0].apex.labels)):
        for cut in sorted(zone.delegation_names()):
            child = zones.get(cut)
            if child is not None and child.signed:
                zone.set_rrset(cut, RecordType.DS, ds_for(child))

        if decl.denial == "nsec":
            build_nsec_chain(zone)
        elif decl.denial == "nsec3":
            build_nsec3_chain(zone, _nsec3_params(decl, zone.apex))
        elif decl.denial == "mixed":
            assignment = {parse_name(n): RecordType.parse(fam)
                          for n, fam in (decl.assignment or {}).items()}
            if decl.gap_salt:
                hashed = [n for n, fam in assignment.items()
                          if fam is RecordType.NSEC3]
                params = find_gap_salt(
                    chain_names=hashed,
                    terminal=parse_name(decl.gap_salt["terminal"]),
                    covered=[parse_name(n)
                             for n in decl.gap_salt["covered"]])
            else:
                params = _nsec3_params(decl, zone.apex)
            build_mixed_chain(zone, assignment, params)

        label = zone.apex.text() if not zone.apex.is_root else "root"
        algorithms = decl.algorithms
        zsk = keygen(crypto.ZSK, algorithms[0], "zsk-%s" % label)
        ksk = keygen(crypto.KSK, algorithms[0], "ksk-%s" % label)
        extra = [keygen(crypto.ZSK, alg, "zsk%d-%s" % (alg, label))
                 for alg in algorithms[1:]]
        sign_zone(zone, zsk, ksk, extra_zsks=extra)

        if decl.malicious_gap:
            zone.malicious_denial_span = (parse_name(decl.malicious_gap[0]),
                                          parse_name(decl.malicious_gap[1]))

    root = zones.get(ROOT)
    if root is None:
        raise ScenarioError("topology needs a zone with apex \".\"")
    servers = {decl.server: zone for zone, decl in loaded}
    routes = {zone.apex: decl.server for zone, decl in loaded}
    return Topology(zones=zones, servers=servers, routes=routes,
                    anchor=TrustAnchor(ds_for(root)[0]))


# --- scenario execution ------------------------------------------------------


@dataclass
class StepResult:
    qname: str
    qtype: str
    cd: bool
    outcome: Optional[ValidatedResponse]
    error: str = ""


@dataclass
class EnumerationResult:
    apex: DomainName
    names: Set[DomainName]
    queries: int
    blocked: bool
    hashes: Set[str] = field(default_factory=set)


@dataclass
class RunOutcome:
    scenario: Scenario
    topology: Topology
    trace: Trace
    resolver: Resolver
    adversary: Optional[Adversary]
    results: Dict[str, List[StepResult]]
    enumerations: Dict[str, EnumerationResult]
    completed: bool


class _Runtime:
    """Shared state the activity generators close over."""

    def __init__(self, resolver: Resolver, cfg: ResolverConfig,
                 adversary: Optional[Adversary], trace: Trace,
                 topology: Topology) -> None:
        self.resolver = resolver
        self.cfg = cfg
        self.adversary = adversary
        self.trace = trace
        self.topology = topology
        self.results: Dict[str, List[StepResult]] = {}
        self.enumerations: Dict[str, EnumerationResult] = {}


def _build_scripts(scenario: Scenario) -> List[AttackerScript]:
    kinds = {"downgrade": "MitmDowngrade", "ruc": "RucInjector",
             "passive": "Passive"}
    scripts = []
    for a in scenario.attackers:
        scripts.append(AttackerScript(
            kind=kinds[a["kind"]],
            victim=parse_name(a["victim"]) if a.get("victim") else None,
            server=a.get("server"),
            target_algorithm=a.get("target_algorithm", 16),
            max_injections=a.get("max_injections", 1)))
    return scripts


def _emit_sign_events(trace: Trace, topology: Topology) -> None:
    for apex in sorted(topology.zones, key=lambda n: n.sort_key()):
        zone = topology.zones[apex]
        for (owner, rtype), records in zone.rrsets.items():
            if rtype is RecordType.RRSIG:
                continue
            for sig in zone.sigs_covering(owner, rtype):
                trace.record(
                    "SignEvent", zone=apex.text(), owner=owner.text(),
                    covered=rtype.value, key=sig.rdata.signer_key_id,
                    message=repr(rrset_message(owner, rtype, records)))


def _query_step(label: str, step: dict, rt: _Runtime):
    q = Query(parse_name(step["query"]),
              RecordType.parse(step.get("qtype", "A")),
              cd_bit=step.get("cd", False))
    rt.trace.record("Query", channel="%s->resolver" % label,
                    qname=q.qname.text(), qtype=q.qtype.value, cd=q.cd_bit)
    try:
        vr = yield from rt.resolver.resolve(q, rt.cfg)
    except ResolutionError as err:
        rt.trace.record("Response", channel="resolver->%s" % label,
                        rcode="", security="", error=str(err))
        rt.results.setdefault(label, []).append(
            StepResult(q.qname.text(), q.qtype.value, q.cd_bit, None,
                       error=str(err)))
        return
    rt.trace.record("Response", channel="resolver->%s" % label,
                    rcode=vr.response.rcode.value,
                    security=vr.security_state, ad=vr.response.ad_bit,
                    ede=vr.ede or "")
    if step.get("role") == "attacker" and rt.adversary is not None:
        rt.adversary.learn(vr.response, source=label)
    rt.results.setdefault(label, []).append(
        StepResult(q.qname.text(), q.qtype.value, q.cd_bit, vr))


def _walk_zone(label: str, apex: DomainName, budget: int, rt: _Runtime):
    """Chain-walking enumeration against the resolver.

    Starting from the apex, each probe is a constructed name landing in the
    gap just past an already-learned name; the denial that comes back names
    that gap's true endpoints. A clear-name chain is walked to exhaustion;
    a hashed chain stops the walk at the first response.
    """
    if rt.adversary is None:
        raise ContractViolation("enumeration requires an adversary")
    rt.adversary.learn(apex, source=label)  # the zone under attack is public
    learned: Set[DomainName] = {apex}
    probed: Set[DomainName] = set()
    queries = 0
    while queries < budget:
        pending = [n for n in sorted(learned, key=lambda n: n.sort_key())
                   if n not in probed]
        if not pending:
            break
        target = pending[0]
        probe = child_probe(target) if target == apex else probe_after(target)
        probe = rt.adversary.derived_name(probe)
        q = Query(probe, RecordType.A)
        rt.trace.record("Query", channel="%s->resolver" % label,
                        qname=q.qname.text(), qtype=q.qtype.value, cd=False)
        vr = yield from rt.resolver.resolve(q, rt.cfg)
        queries += 1
        probed.add(target)
        rt.adversary.learn(vr.response, source=label)
        rt.trace.record("Response", channel="resolver->%s" % label,
                        rcode=vr.response.rcode.value,
                        security=vr.security_state, ad=vr.response.ad_bit,
                        ede=vr.ede or "")
        denials = [r for r in vr.response.authority
                   if r.rtype in (RecordType.NSEC, RecordType.NSEC3)]
        nsecs = [r for r in denials if r.rtype is RecordType.NSEC]
        if denials and not nsecs:
            hashes: Set[str] = set()
            for rec in denials:
                hashes.add(rec.owner.labels[0])
                hashes.add(rec.rdata.next_hashed)
            raise EnumerationBlocked(queries, hashes)
        for rec in nsecs:
            for name in (rec.owner, rec.rdata.next_name):
                if apex.is_ancestor_of(name):
                    learned.add(name)
    return learned, queries


def _enumerate_step(label: str, step: dict, rt: _Runtime):
    apex = parse_name(step["enumerate"])
    zone = rt.topology.zones.get(apex)
    default_budget = 2 * len(zone.owner_names()) if zone is not None else 32
    budget = step.get("budget", default_budget)
    try:
        names, queries = yield from _walk_zone(label, apex, budget, rt)
        result = EnumerationResult(apex=apex, names=names, queries=queries,
                                   blocked=False)
    except EnumerationBlocked as blocked:
        result = EnumerationResult(apex=apex, names=set(),
                                   queries=blocked.queries, blocked=True,
                                   hashes=blocked.hashes)
    rt.enumerations[apex.text()] = result
    rt.trace.record("Enumeration", apex=apex.text(),
                    learned=sorted(n.text() for n in result.names),
                    queries=result.queries, blocked=result.blocked,
                    hashes=len(result.hashes))


def _activity(label: str, steps: Sequence[dict], rt: _Runtime):
    for step in steps:
        for _ in range(step.get("repeat", 1)):
            if "enumerate" in step:
                yield from _enumerate_step(label, step, rt)
            else:
                yield from _query_step(label, step, rt)


def run(scenario: Scenario, topology: Optional[Topology] = None) -> RunOutcome:
    """Execute a scenario under its seed; returns the outcome bundle.

    A pre-built topology may be passed in to amortize signing across many
    seeds of the same scenario; it is never mutated by a run.
    """
    trace = Trace()
    if topology is None:
        topology = build_topology(scenario)
    _emit_sign_events(trace, topology)

    adversary = (Adversary(trace, _build_scripts(scenario))
                 if scenario.adversary else None)
    network = Network(topology.servers, trace, adversary=adversary,
                      honest_servers=scenario.honest_servers)
    scheduler = Scheduler(scenario.seed, trace=trace,
                          step_budget=scenario.step_budget,
                          rpc_handler=network.transmit)
    resolver = Resolver(topology.routes, topology.anchor, scheduler, trace,
                        cache_enabled=scenario.cache_enabled,
                        nondet_expiry=scenario.nondet_expiry)
    rt = _Runtime(resolver, scenario.resolver, adversary, trace, topology)

    completed = True
    for phase in scenario.phases:
        for activity in phase:
            scheduler.spawn(activity.label,
                            _activity(activity.label, activity.steps, rt))
        try:
            scheduler.run()
        except BudgetExceeded:
            completed = False
            break

    expired = sum(1 for cache in resolver.caches.values()
                  for entry in cache.values() if entry.status == "Expired")
    trace.record("Quiescence", locks=len(scheduler.outstanding_locks()),
                 expired=expired, steps=scheduler.steps, completed=completed)
    return RunOutcome(scenario=scenario, topology=topology, trace=trace,
                      resolver=resolver, adversary=adversary,
                      results=rt.results, enumerations=rt.enumerations,
                      completed=completed)


def run_scenario(scenario: Scenario) -> Trace:
    """Run a scenario and return just its trace."""
    return run(scenario).trace


# --- zone enumeration entry point ---------------------------------------------


def enumerate_zone(scenario: Scenario, apex: DomainName,
                   budget: Optional[int] = None) -> EnumerationResult:
    """Walk one zone through the scenario's resolver.

    Replaces the scenario's activities with a single walker. Returns the
    recovered names; raises EnumerationBlocked when the zone's denial chain
    is hashed.
    """
    step: dict = {"enumerate": apex.text()}
    if budget is not None:
        step["budget"] = budget
    walker = Activity("walker", (step,))
    scn = dataclasses.replace(scenario, phases=((walker,),))
    outcome = run(scn)
    result = outcome.enumerations[apex.text()]
    if result.blocked:
        raise EnumerationBlocked(result.queries, result.hashes)
    return result


# --- mixed-denial replay -------------------------------------------------------


def _names_denied_by(zone: Zone, records: Iterable[ResourceRecord]
                     ) -> Set[DomainName]:
    """Ground truth: data-owning names each denial span actually covers."""
    existing = zone.owner_names()
    out: Set[DomainName] = set()
    for rec in records:
        if rec.rtype is RecordType.NSEC:
            out |= {d for d in existing
                    if covers(rec.owner, rec.rdata.next_name, d)}
        elif rec.rtype is RecordType.NSEC3:
            params = rec.rdata.params
            out |= {d for d in existing
                    if covers_span(rec.owner.labels[0], rec.rdata.next_hashed,
                                   nsec3_hash(d, params))}
    return out


def replay_mixed_gap(scenario: Optional[Scenario] = None,
                     policy: Optional[str] = None,
                     seed: Optional[int] = None) -> Tuple[Trace, dict]:
    """Run the mixed NSEC/NSEC3 zone scenario and report what got cached.

    The report carries, per client step, the rcode and security state, plus
    a census of cached denial entries by evidence family and the ground
    truth names the cached spans deny.
    """
    if scenario is None:
        scenario = load_packaged_scenario("mixed-gap")
    if policy is not None:
        scenario = dataclasses.replace(
            scenario,
            resolver=dataclasses.replace(scenario.resolver,
                                         mixed_denial_policy=policy))
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    outcome = run(scenario)

    mixed = [z for z in outcome.topology.zones.values()
             if z.denial_family == "mixed"]
    if not mixed:
        raise ScenarioError("scenario has no mixed-denial zone")
    zone = mixed[0]
    server = outcome.topology.routes[zone.apex]

    census = {"nsec": 0, "nsec3": 0}
    entries = {}
    denied: Set[DomainName] = set()
    cache = outcome.resolver.caches.get(server, {})
    for key in sorted(cache, key=lambda k: (k[0].sort_key(), k[1].value)):
        entry = cache[key]
        if entry.rcode is not Rcode.NXDOMAIN:
            continue
        denials = [r for r in entry.authority
                   if r.rtype in (RecordType.NSEC, RecordType.NSEC3)]
        family = denial_evidence_family(Query(key[0], key[1]), denials)
        if family in census:
            census[family] += 1
        entries[key[0].text()] = family
        denied |= _names_denied_by(zone, denials)

    steps = []
    for label in sorted(outcome.results):
        for res in outcome.results[label]:
            vr = res.outcome
            steps.append({
                "qname": res.qname, "qtype": res.qtype,
                "rcode": vr.response.rcode.value if vr else "",
                "security": vr.security_state if vr else "",
                "answer": sorted(r.rdata.address
                                 for r in (vr.response.answer if vr else ())
                                 if r.rtype is RecordType.A),
                "error": res.error,
            })
    report = {
        "policy": scenario.resolver.mixed_denial_policy,
        "seed": scenario.seed,
        "steps": steps,
        "denial_cache": census,
        "denial_cache_entries": entries,
        "denied_existing": sorted(d.text() for d in denied),
    }
    return outcome.trace, report


# --- property verdicts ---------------------------------------------------------


@dataclass
class Verdict:
    property_id: int
    name: str
    result: str  # "Holds" or "Falsified"
    explored: int
    counterexample: Optional[dict] = None

    def to_dict(self) -> dict:
        out = {"id": self.property_id, "name": self.name,
               "result": self.result, "explored": self.explored}
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        return out


def check_properties(property_ids: Sequence[int],
                     outcomes: Iterable[RunOutcome]) -> Dict[int, Verdict]:
    """Evaluate several properties over one stream of outcomes.

    Each outcome is generated once and every still-unfalsified checker sees
    it, so a shared corpus costs one run per seed regardless of how many
    properties quantify over it.
    """
    from .properties import PROPERTIES

    unknown = [pid for pid in property_ids if pid not in PROPERTIES]
    if unknown:
        raise KeyError("unknown property ids %s" % unknown)
    falsified: Dict[int, dict] = {}
    explored = 0
    for outcome in outcomes:
        explored += 1
        for pid in property_ids:
            if pid in falsified:
                continue
            violation = PROPERTIES[pid].checker(outcome)
            if violation:
                falsified[pid] = {"seed": outcome.scenario.seed,
                                  "scenario": outcome.scenario.name,
                                  "detail": violation}
    verdicts = {}
    for pid in property_ids:
        spec = PROPERTIES[pid]
        if pid in falsified:
            verdicts[pid] = Verdict(pid, spec.name, "Falsified", explored,
                                    counterexample=falsified[pid])
        else:
            verdicts[pid] = Verdict(pid, spec.name, "Holds", explored)
    return verdicts


def check_property(property_id: int,
                   outcomes: Iterable[RunOutcome]) -> Verdict:
    """Evaluate one property over a corpus of run outcomes."""
    return check_properties([property_id], outcomes)[property_id]


def property_corpus(property_id: int, seeds: Sequence[int],
                    scenario: Optional[Scenario] = None
                    ) -> Iterator[RunOutcome]:
    """Outcome stream for one property: its scenario, one run per seed.

    Denial and secrecy properties (13 and up) run with the cache disabled,
    so every client interaction exercises the wire protocol. The topology
    is built once and shared across seeds.
    """
    from .properties import PROPERTIES

    spec = PROPERTIES[property_id]
    if scenario is None:
        scenario = load_packaged_scenario(spec.scenario)
    if property_id >= 13:
        scenario = dataclasses.replace(scenario, cache_enabled=False)
    topology = build_topology(scenario)
    for seed in seeds:
        scn = dataclasses.replace(scenario, seed=seed)
        variants = spec.variants or ({},)
        for overrides in variants:
            if overrides:
                scn_v = dataclasses.replace(
                    scn, resolver=dataclasses.replace(scn.resolver,
                                                      **overrides))
            else:
                scn_v = scn
            yield run(scn_v, topology=topology)


# --- reports -------------------------------------------------------------------


def render_verdicts(verdicts: Sequence[Verdict], fmt: str = "table") -> str:
    if fmt == "json-lines":
        return "\n".join(json.dumps(v.to_dict(), sort_keys=True)
                         for v in verdicts)
    rows = [("ID", "Property", "Result", "Runs", "Counterexample")]
    for v in verdicts:
        note = ""
        if v.counterexample:
            note = "seed %s: %s" % (v.counterexample.get("seed"),
                                    v.counterexample.get("detail", ""))
        rows.append((str(v.property_id), v.name, v.result, str(v.explored),
                     note))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = []
    for row in rows:
        cells = [row[i].ljust(widths[i]) for i in range(4)] + [row[4]]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def dump_trace(trace: Trace) -> str:
    """Stable one-event-per-line JSON rendering of a trace."""
    return "\n".join(json.dumps(event.to_dict(), sort_keys=True)
                     for event in trace)
