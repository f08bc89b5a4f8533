"""The nineteen checkable properties and their trace predicates.

Each checker takes a RunOutcome and returns None when the outcome is
consistent with the property, or a short violation description that becomes
the counterexample. Checkers quantify over the recorded trace plus the
scenario's ground truth (the signed zones themselves), never over resolver
internals, so a verdict is always reproducible from the trace and topology.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Set, Tuple

from .crypto import nsec3_hash
from .names import (AData, DomainName, Query, RecordType, ResourceRecord,
                    covers, covers_span, parse_name)
from .resolver import (OK, ResolverConfig, describe_record, validate_rrsig)
from .zone import Zone, answer_query, rrset_message


@dataclass(frozen=True)
class PropertySpec:
    property_id: int
    name: str
    scenario: str
    expected: str
    checker: Callable
    variants: Tuple[dict, ...] = ()


# --- small trace helpers -------------------------------------------------------


def _cache_ops(outcome) -> List:
    return outcome.trace.by_kind("CacheOp")


def _parse_key(text: str) -> Tuple[DomainName, RecordType]:
    owner, tag = text.rsplit("/", 1)
    return parse_name(owner), RecordType.parse(tag)


def _lock_key_for(origin: str, key: str) -> str:
    return "rrset/%s/%s" % (origin, key)


def _quiescence(outcome) -> Optional[dict]:
    events = outcome.trace.by_kind("Quiescence")
    return events[-1].data if events else None


# --- 1. cache read/write properties ---------------------------------------------


def check_cache_hit_semantics(outcome) -> Optional[str]:
    """Every cache hit serves exactly what the origin would answer."""
    for event in _cache_ops(outcome):
        d = event.data
        if d["kind"] != "lookup-hit":
            continue
        zone = outcome.topology.servers.get(d["origin"])
        if zone is None:
            return "cache hit against unknown origin %r" % d["origin"]
        owner, rtype = _parse_key(d["key"])
        truth = answer_query(zone, Query(owner, rtype))
        if d["rcode"] != truth.rcode.value:
            return ("hit on %s served rcode %s, origin would answer %s"
                    % (d["key"], d["rcode"], truth.rcode.value))
        expect_answer = sorted(describe_record(r) for r in truth.answer)
        expect_auth = sorted(describe_record(r) for r in truth.authority)
        if d["answer"] != expect_answer or d["authority"] != expect_auth:
            return "hit on %s diverges from origin content" % d["key"]
    return None


def check_cache_miss_handling(outcome) -> Optional[str]:
    """Misses are resolved under the lock discipline and end in an insert."""
    held: Set[Tuple[str, str]] = set()
    misses: Dict[Tuple[str, str, str], int] = {}
    inserts: Set[Tuple[str, str, str]] = set()
    for idx, event in enumerate(outcome.trace):
        d = event.data
        if event.kind == "LockOp":
            pair = (d.get("task", ""), d["key"])
            if d["op"] == "acquire":
                held.add(pair)
            elif d["op"] == "release":
                held.discard(pair)
        elif event.kind == "CacheOp":
            task = d.get("task", "")
            lock = _lock_key_for(d["origin"], d["key"])
            if (task, lock) not in held:
                return ("%s ran a cache %s on %s without its lock"
                        % (task or "?", d["kind"], d["key"]))
            triple = (task, d["origin"], d["key"])
            if d["kind"] == "lookup-miss":
                misses.setdefault(triple, idx)
            elif d["kind"] == "insert":
                inserts.add(triple)
    for (task, origin, key), idx in misses.items():
        if (task, origin, key) not in inserts:
            return ("%s missed on %s at %s and never inserted a result"
                    % (task, key, origin))
    return None


def check_cache_partitioning(outcome) -> Optional[str]:
    """Entries live only in the cache of the origin that produced them."""
    servers = set(outcome.topology.servers)
    for event in _cache_ops(outcome):
        if event.data["origin"] not in servers:
            return "cache op against unknown origin %r" % event.data["origin"]
    for origin, cache in outcome.resolver.caches.items():
        if origin not in servers:
            return "cache bucket for unknown origin %r" % origin
        for key, entry in cache.items():
            if entry.origin != origin:
                return ("entry %s/%s claims origin %s but sits in %s's cache"
                        % (key[0].text(), key[1].value, entry.origin, origin))
            if entry.key != key:
                return "entry stored under a foreign key in %s" % origin
    return None


def check_atomic_expiration(outcome) -> Optional[str]:
    """Expired entries are never served; only an insert revives a key."""
    stale: Set[Tuple[str, str]] = set()
    for event in _cache_ops(outcome):
        d = event.data
        pair = (d["origin"], d["key"])
        if d["kind"] == "expire":
            stale.add(pair)
        elif d["kind"] == "insert":
            stale.discard(pair)
        elif d["kind"] == "lookup-hit":
            if d["status"] != "Active":
                return "hit served a %s entry on %s" % (d["status"], d["key"])
            if pair in stale:
                return ("hit on %s at %s after expiry, before any refresh"
                        % (d["key"], d["origin"]))
    return None


def check_mutual_exclusion(outcome) -> Optional[str]:
    """At most one task holds any RRSet lock at a time."""
    holder: Dict[str, str] = {}
    for event in outcome.trace.by_kind("LockOp"):
        d = event.data
        key, task = d["key"], d.get("task", "")
        if d["op"] == "acquire":
            if key in holder:
                return ("%s acquired %s while %s still held it"
                        % (task, key, holder[key]))
            holder[key] = task
        elif d["op"] == "release":
            if holder.get(key) != task:
                return "%s released %s it did not hold" % (task, key)
            del holder[key]
    return None


def check_state_synchronization(outcome) -> Optional[str]:
    """Versions advance by one per insert and reads see the latest write."""
    version: Dict[Tuple[str, str], int] = {}
    for event in _cache_ops(outcome):
        d = event.data
        pair = (d["origin"], d["key"])
        if d["kind"] == "insert":
            expected = version.get(pair, 0) + 1
            if d["version"] != expected:
                return ("insert on %s wrote version %s, expected %s"
                        % (d["key"], d["version"], expected))
            version[pair] = d["version"]
        elif d["kind"] in ("lookup-hit", "expire"):
            if d["version"] != version.get(pair, 0):
                return ("%s on %s saw version %s while %s is current"
                        % (d["kind"], d["key"], d["version"],
                           version.get(pair, 0)))
    return None


def check_termination(outcome) -> Optional[str]:
    """Every activity finishes within the step budget despite expiry races."""
    if not outcome.completed:
        return "scenario exceeded its step budget"
    for phase in outcome.scenario.phases:
        for activity in phase:
            queries = sum(step.get("repeat", 1) for step in activity.steps
                          if "query" in step)
            got = len(outcome.results.get(activity.label, []))
            if got != queries:
                return ("activity %s finished %d of %d queries"
                        % (activity.label, got, queries))
            for step in activity.steps:
                if "enumerate" in step \
                        and step["enumerate"] not in outcome.enumerations:
                    return "activity %s never finished its walk" % activity.label
    return None


def check_resource_reclamation(outcome) -> Optional[str]:
    """Locks drain, and expired entries are refreshed promptly."""
    quiescence = _quiescence(outcome)
    if quiescence is None:
        return "no quiescence marker recorded"
    if quiescence["locks"]:
        return "%d locks still held at quiescence" % quiescence["locks"]
    if quiescence["expired"]:
        return ("%d expired entries never refreshed" % quiescence["expired"])
    bound = outcome.scenario.cleanup_bound
    per_task: Dict[str, List[dict]] = {}
    for event in _cache_ops(outcome):
        per_task.setdefault(event.data.get("task", ""), []).append(event.data)
    for task, ops in per_task.items():
        for i, op in enumerate(ops):
            if op["kind"] != "expire":
                continue
            window = ops[i + 1:i + 1 + bound]
            refreshed = any(later["kind"] == "insert"
                            and later["origin"] == op["origin"]
                            and later["key"] == op["key"]
                            for later in window)
            if not refreshed:
                return ("%s expired %s and did not refresh it within %d of "
                        "its own cache ops" % (task, op["key"], bound))
    return None


# --- 2. authentication properties -----------------------------------------------


def check_origin_authentication(outcome) -> Optional[str]:
    """Secure acceptances carry signatures the authority actually made."""
    signed_at_origin = {(e.data["message"], e.data["key"])
                        for e in outcome.trace.by_kind("SignEvent")}
    for event in outcome.trace.by_kind("AcceptEvent"):
        d = event.data
        if d["security"] != "Secure":
            continue
        if not d["signed"]:
            return ("secure acceptance of %s/%s cites no signature"
                    % (d["qname"], d["qtype"]))
        for entry in d["signed"]:
            if (entry["message"], entry["key"]) not in signed_at_origin:
                return ("accepted signature by %s over %s was never made by "
                        "any authority" % (entry["key"], d["qname"]))
    return None


def _zone_public_keys(zone: Zone) -> List:
    return [rec.rdata.public_key
            for rec in zone.get_rrset(zone.apex, RecordType.DNSKEY)]


_ALL_ALGORITHMS = ResolverConfig(supported_algorithms=frozenset(range(256)))


def _signed_rrsets(zone: Zone):
    for (owner, rtype), records in zone.rrsets.items():
        if rtype is RecordType.RRSIG:
            continue
        sigs = zone.sigs_covering(owner, rtype)
        if sigs:
            yield owner, rtype, records, sigs


def _check_record_mutations(topology) -> Optional[str]:
    for zone in topology.zones.values():
        keys = _zone_public_keys(zone)
        for owner, rtype, records, sigs in _signed_rrsets(zone):
            genuine = any(validate_rrsig(records, sig, key, _ALL_ALGORITHMS)
                          == OK for sig in sigs for key in keys)
            if not genuine:
                return ("authentic %s/%s fails its own signatures"
                        % (owner.text(), rtype.value))
            tampered = tuple(
                dataclasses.replace(rec, rdata=AData(address="tampered"))
                for rec in records)
            for sig in sigs:
                for key in keys:
                    if validate_rrsig(tampered, sig, key,
                                      _ALL_ALGORITHMS) == OK:
                        return ("tampered %s/%s still validates"
                                % (owner.text(), rtype.value))
    return None


def check_record_validation(outcome) -> Optional[str]:
    """No modified record content survives signature validation."""
    cached = getattr(outcome.topology, "_record_mutation_result", False)
    if cached is False:
        cached = _check_record_mutations(outcome.topology)
        outcome.topology._record_mutation_result = cached
    return cached


def _legitimate_messages(zone: Zone) -> Set[str]:
    return {repr(rrset_message(owner, rtype, records))
            for (owner, rtype), records in zone.rrsets.items()
            if rtype is not RecordType.RRSIG}


def _check_signature_mutations(topology) -> Optional[str]:
    for zone in topology.zones.values():
        keys = _zone_public_keys(zone)
        legitimate = _legitimate_messages(zone)
        previous: Optional[ResourceRecord] = None
        for owner, rtype, records, sigs in _signed_rrsets(zone):
            sig = sigs[0]
            variants = [dataclasses.replace(
                sig, rdata=dataclasses.replace(sig.rdata,
                                               label_count=sig.rdata.label_count + 1))]
            flipped = (RecordType.MX if rtype is not RecordType.MX
                       else RecordType.A)
            variants.append(dataclasses.replace(
                sig, rdata=dataclasses.replace(sig.rdata,
                                               type_covered=flipped)))
            if sig.rdata.label_count >= 1:
                shallow = dataclasses.replace(
                    sig, rdata=dataclasses.replace(
                        sig.rdata, label_count=sig.rdata.label_count - 1))
                source = DomainName(
                    ("*",) + owner.labels[len(owner.labels)
                                          - shallow.rdata.label_count:])
                rebuilt = repr(rrset_message(
                    source, rtype,
                    [dataclasses.replace(r, owner=source) for r in records]))
                if rebuilt not in legitimate:
                    variants.append(shallow)
            if previous is not None and previous.owner != owner:
                variants.append(dataclasses.replace(
                    previous, owner=owner,
                    rdata=dataclasses.replace(previous.rdata,
                                              type_covered=rtype)))
            for variant in variants:
                for key in keys:
                    if validate_rrsig(records, variant, key,
                                      _ALL_ALGORITHMS) == OK:
                        return ("mutated signature over %s/%s still "
                                "validates" % (owner.text(), rtype.value))
            previous = sig
    return None


def check_integrity_preservation(outcome) -> Optional[str]:
    """No modified signature survives validation over its RRSet."""
    cached = getattr(outcome.topology, "_sig_mutation_result", False)
    if cached is False:
        cached = _check_signature_mutations(outcome.topology)
        outcome.topology._sig_mutation_result = cached
    return cached


def check_chain_integrity(outcome) -> Optional[str]:
    """Secure DNSKEY acceptances carry exactly the authority's key sets."""
    for event in outcome.trace.by_kind("AcceptEvent"):
        d = event.data
        if d["qtype"] != "DNSKEY" or d["security"] != "Secure":
            continue
        apex = parse_name(d["zone"])
        zone = outcome.topology.zones.get(apex)
        if zone is None:
            return "secure DNSKEY acceptance for unknown zone %s" % d["zone"]
        truth = {describe_record(r)
                 for r in zone.get_rrset(apex, RecordType.DNSKEY)}
        truth |= {describe_record(r)
                  for r in zone.sigs_covering(apex, RecordType.DNSKEY)}
        foreign = [r for r in d["answer"] if r not in truth]
        if foreign:
            return ("secure DNSKEY acceptance for %s includes keys the zone "
                    "never published: %s" % (d["zone"], foreign[0]))
    return None


# --- 3. denial properties --------------------------------------------------------


def _client_responses(outcome):
    for event in outcome.trace.by_kind("Response"):
        if "security" in event.data and event.data["channel"].startswith(
                "resolver->"):
            yield event


def check_executability_nsec(outcome) -> Optional[str]:
    """Clear-chain denials validate end to end and the walk completes."""
    for event in _client_responses(outcome):
        if event.data["security"] != "Secure":
            return ("client response for a clear-chain zone was %s"
                    % (event.data["security"] or event.data.get("error")))
    if not outcome.enumerations:
        return "no walk ran"
    for result in outcome.enumerations.values():
        if result.blocked:
            return "walk blocked on a clear chain"
        zone = outcome.topology.zones.get(result.apex)
        truth = set(zone.owner_names()) if zone else set()
        if result.names != truth:
            missing = sorted(n.text() for n in truth - result.names)
            return "walk missed names: %s" % missing
        if result.queries > 2 * len(truth):
            return ("walk used %d queries for %d names"
                    % (result.queries, len(truth)))
    return None


def check_executability_nsec3(outcome) -> Optional[str]:
    """Hashed-chain denials still validate; only the walk is stopped."""
    accepted_hashed = False
    for event in outcome.trace.by_kind("AcceptEvent"):
        if event.data["denial"] and event.data["family"] == "nsec3":
            accepted_hashed = True
    if not accepted_hashed:
        return "no hashed denial was ever accepted"
    for event in _client_responses(outcome):
        if event.data["security"] != "Secure":
            return ("client response over the hashed chain was %s"
                    % (event.data["security"] or event.data.get("error")))
    return None


def _external_mentions(topology, apex: DomainName) -> Set[DomainName]:
    """Names a zone's secrecy cannot cover: published by other zones."""
    mentioned: Set[DomainName] = set()
    for other_apex, other in topology.zones.items():
        if other_apex == apex:
            continue
        for (owner, _rtype), records in other.rrsets.items():
            mentioned.add(owner)
            for rec in records:
                for f in dataclasses.fields(rec.rdata):
                    value = getattr(rec.rdata, f.name)
                    if isinstance(value, DomainName):
                        mentioned.add(value)
    return mentioned


def check_domain_secrecy(outcome) -> Optional[str]:
    """Zone-interior names stay unknown unless a client asked for them."""
    if outcome.adversary is None:
        return None
    asked = {e.data["qname"] for e in outcome.trace.by_kind("Query")}
    for apex, zone in outcome.topology.zones.items():
        if zone.denial_family == "none":
            continue
        mentioned = _external_mentions(outcome.topology, apex)
        for name in sorted(zone.owner_names(), key=lambda n: n.sort_key()):
            if name == apex or name in mentioned:
                continue
            if outcome.adversary.knows(name) and name.text() not in asked:
                return ("%s became known without ever being queried"
                        % name.text())
    return None


def _denial_relevant(rec: ResourceRecord, q: DomainName) -> bool:
    """Could this record be evidence about q (or q's wildcard ancestry)?"""
    strict_ancestors = list(q.ancestors())[1:]
    if rec.rtype is RecordType.NSEC:
        if rec.owner == q or covers(rec.owner, rec.rdata.next_name, q):
            return True
        for anc in strict_ancestors:
            wc = anc.child("*")
            if rec.owner == wc or covers(rec.owner, rec.rdata.next_name, wc):
                return True
        return False
    if rec.rtype is RecordType.NSEC3:
        params = rec.rdata.params
        own = rec.owner.labels[0]

        def hits(name: DomainName) -> bool:
            h = nsec3_hash(name, params)
            return h == own or covers_span(own, rec.rdata.next_hashed, h)

        if hits(q):
            return True
        for anc in strict_ancestors:
            next_closer = DomainName(
                q.labels[len(q.labels) - len(anc.labels) - 1:])
            if hits(anc) or hits(next_closer) or hits(anc.child("*")):
                return True
        return False
    return False


def _make_result_authentication(family: str) -> Callable:
    def checker(outcome) -> Optional[str]:
        transmitted: Set[str] = set()
        describe_maps: Dict[DomainName, Dict[str, ResourceRecord]] = {}
        for apex, zone in outcome.topology.zones.items():
            describe_maps[apex] = {describe_record(r): r
                                   for records in zone.rrsets.values()
                                   for r in records}
        for event in outcome.trace:
            d = event.data
            if event.kind == "Response" and d.get("channel", "").endswith(
                    "->resolver"):
                transmitted.update(d.get("answer", ()))
                transmitted.update(d.get("authority", ()))
            if event.kind != "AcceptEvent" or not d["denial"]:
                continue
            if d["family"] != family:
                return ("denial for %s accepted on %s evidence in a %s zone"
                        % (d["qname"], d["family"], family))
            zone_map = describe_maps.get(parse_name(d["zone"]), {})
            qname = parse_name(d["qname"])
            for text in d["proof"]:
                rec = zone_map.get(text)
                if rec is None:
                    return ("accepted denial record for %s is not a zone "
                            "record: %s" % (d["qname"], text))
                if text not in transmitted:
                    return ("accepted denial record for %s was never "
                            "transmitted: %s" % (d["qname"], text))
                if not _denial_relevant(rec, qname):
                    return ("accepted denial record says nothing about %s: "
                            "%s" % (d["qname"], text))
        return None

    return checker


check_result_authentication_nsec = _make_result_authentication("nsec")
check_result_authentication_nsec3 = _make_result_authentication("nsec3")


def check_denial_correctness(outcome) -> Optional[str]:
    """No accepted denial span covers a name that owns data."""
    from .harness import _names_denied_by

    describe_maps: Dict[DomainName, Dict[str, ResourceRecord]] = {}
    for apex, zone in outcome.topology.zones.items():
        describe_maps[apex] = {describe_record(r): r
                               for records in zone.rrsets.values()
                               for r in records}
    for event in outcome.trace.by_kind("AcceptEvent"):
        d = event.data
        if not d["denial"]:
            continue
        apex = parse_name(d["zone"])
        zone = outcome.topology.zones.get(apex)
        zone_map = describe_maps.get(apex, {})
        records = [zone_map[t] for t in d["proof"] if t in zone_map]
        denied = _names_denied_by(zone, records)
        if denied:
            victim = sorted(denied, key=lambda n: n.sort_key())[0]
            return ("accepted denial for %s covers the existing name %s"
                    % (d["qname"], victim.text()))
        if zone is not None:
            qname = parse_name(d["qname"])
            if (d["denial"] == "ProvenNonexistent"
                    and zone.data_types_at(qname)):
                return ("nonexistence accepted for %s, which owns data"
                        % d["qname"])
    return None


# --- the table -------------------------------------------------------------------


PROPERTIES: Dict[int, PropertySpec] = {spec.property_id: spec for spec in [
    PropertySpec(1, "Consistent Cache Hit Semantics", "baseline", "Holds",
                 check_cache_hit_semantics),
    PropertySpec(2, "Provable Cache Miss Handling", "baseline", "Holds",
                 check_cache_miss_handling),
    PropertySpec(3, "Strict Server Cache Partitioning", "baseline", "Holds",
                 check_cache_partitioning),
    PropertySpec(4, "Atomic Expiration & Refresh", "baseline", "Holds",
                 check_atomic_expiration),
    PropertySpec(5, "Mutual Exclusion via Locks", "baseline", "Holds",
                 check_mutual_exclusion),
    PropertySpec(6, "State Synchronization", "baseline", "Holds",
                 check_state_synchronization),
    PropertySpec(7, "Termination Under Expiry", "baseline", "Holds",
                 check_termination),
    PropertySpec(8, "Resource Reclamation", "baseline", "Holds",
                 check_resource_reclamation),
    PropertySpec(9, "Data Origin Authentication", "baseline", "Holds",
                 check_origin_authentication),
    PropertySpec(10, "Record Validation", "baseline", "Holds",
                 check_record_validation),
    PropertySpec(11, "Integrity Preservation", "baseline", "Holds",
                 check_integrity_preservation),
    PropertySpec(12, "Chain Integrity", "ruc", "Holds",
                 check_chain_integrity,
                 variants=({}, {"cache_partitioning": "ByValidationState"})),
    PropertySpec(13, "Executability (NSEC)", "enumeration", "Holds",
                 check_executability_nsec),
    PropertySpec(14, "Domain Secrecy (NSEC)", "enumeration", "Falsified",
                 check_domain_secrecy),
    PropertySpec(15, "Result Authentication (NSEC)", "enumeration", "Holds",
                 check_result_authentication_nsec),
    PropertySpec(16, "Executability (NSEC3)", "enumeration-nsec3", "Holds",
                 check_executability_nsec3),
    PropertySpec(17, "Domain Secrecy (NSEC3)", "enumeration-nsec3", "Holds",
                 check_domain_secrecy),
    PropertySpec(18, "Result Authentication (NSEC3)", "enumeration-nsec3",
                 "Holds", check_result_authentication_nsec3),
    PropertySpec(19, "Denial Correctness (Mixed)", "mixed-gap", "Falsified",
                 check_denial_correctness),
]}
