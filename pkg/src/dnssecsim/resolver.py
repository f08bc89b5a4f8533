"""Validating iterative resolver with a lock-guarded, origin-partitioned cache.

The resolver walks delegations from the root, establishes each zone's keys
through the chain of trust, validates answers and denial proofs, and caches
per (owner, rtype) under per-RRSet locks. ``resolve`` is a coroutine in the
scheduler's effect protocol: it yields lock, rpc, and choice effects and
finally returns a ValidatedResponse.

Cache entries carry three pieces of state the properties quantify over: a
status (Active or Expired, flipped by a scheduler choice at lookup time), a
validated flag (false for answers fetched with CD=1), and a version counter
bumped by every insert.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .crypto import ContractViolation, PublicKey, nsec3_hash, verify
from .names import (DomainName, Query, Rcode, RecordType, ResourceRecord,
                    Response, ROOT, covers, covers_span)
from .zone import dnskey_digest, rrset_message

# cache entry status
ACTIVE = "Active"
EXPIRED = "Expired"

# security states
SECURE = "Secure"
INSECURE = "Insecure"
BOGUS = "Bogus"

# config values
STRICT = "Strict"
PERMISSIVE = "Permissive"
UNIFIED = "Unified"
BY_VALIDATION_STATE = "ByValidationState"
ACCEPT = "Accept"
SERVFAIL_ON_MIX = "Servfail"

# validation outcomes
OK = "Ok"
UNSUPPORTED_ALGORITHM = "UnsupportedAlgorithm"
PROVEN_NONEXISTENT = "ProvenNonexistent"
PROVEN_NODATA = "ProvenNoData"
INVALID = "Invalid"
VALID = "Valid"


class ResolutionError(Exception):
    """Delegation chain unreachable or looping beyond the depth bound."""


class _Bogus(Exception):
    """Internal: validation failed; resolve answers SERVFAIL."""

    def __init__(self, reason: str, ede: str = "DNSSEC bogus") -> None:
        super().__init__(reason)
        self.ede = ede


@dataclass(frozen=True)
class TrustAnchor:
    """The root zone's DS record, immutable for a scenario's lifetime."""
    ds0: ResourceRecord


@dataclass(frozen=True)
class ResolverConfig:
    supported_algorithms: frozenset = frozenset({8, 13})
    downgrade_policy: str = STRICT
    cache_partitioning: str = UNIFIED
    mixed_denial_policy: str = ACCEPT
    max_depth: int = 8


@dataclass
class CacheEntry:
    key: Tuple[DomainName, RecordType]
    rrset: Tuple[ResourceRecord, ...]
    origin: str
    status: str
    validated: bool
    version: int
    rcode: Rcode = Rcode.NOERROR
    authority: Tuple[ResourceRecord, ...] = ()
    additional: Tuple[ResourceRecord, ...] = ()

    def as_response(self) -> Response:
        return Response(rcode=self.rcode, answer=self.rrset,
                        authority=self.authority, additional=self.additional)


@dataclass
class ValidatedResponse:
    response: Response
    security_state: str
    proof: Tuple[dict, ...] = ()
    ede: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.response.ad_bit and self.security_state != SECURE) or (
                self.security_state == SECURE and not self.response.ad_bit):
            raise ContractViolation("ad bit must track the Secure state")


# --- signature validation ----------------------------------------------------


def _wildcard_source(owner: DomainName, label_count: int) -> DomainName:
    return DomainName(("*",) + owner.labels[len(owner.labels) - label_count:])


def validate_rrsig(rrset: Sequence[ResourceRecord], sig: ResourceRecord,
                   key: PublicKey, cfg: ResolverConfig) -> str:
    """Check one RRSIG over an RRSet against one public key.

    Returns Ok, Bogus, or UnsupportedAlgorithm. A label count below the
    owner's depth means the records were synthesized from a wildcard; the
    signed message is rebuilt over the wildcard source name before the
    symbolic verify.
    """
    rd = sig.rdata
    if rd.algorithm not in cfg.supported_algorithms:
        return UNSUPPORTED_ALGORITHM
    if rd.signature is None or not rrset:
        return BOGUS
    owner = rrset[0].owner
    depth = owner.label_depth()
    if rd.label_count > depth:
        return BOGUS
    if rd.label_count < depth:
        source = _wildcard_source(owner, rd.label_count)
        records = [dataclasses.replace(rec, owner=source) for rec in rrset]
        message = rrset_message(source, rd.type_covered, records)
    else:
        message = rrset_message(owner, rd.type_covered, rrset)
    if verify(rd.signature, message, key):
        return OK
    return BOGUS


def signed_messages(rrset: Sequence[ResourceRecord],
                    sigs: Sequence[ResourceRecord]) -> List[dict]:
    """(message, key) evidence for the signatures over an RRSet.

    Reconstructs the exact canonical message each signature claims to cover,
    including the wildcard-source rewrite, so acceptance events can be
    matched against authoritative signing events without re-verifying.
    """
    out = []
    if not rrset:
        return out
    owner = rrset[0].owner
    depth = owner.label_depth()
    for sig in sigs:
        rd = sig.rdata
        if rd.label_count < depth:
            source = _wildcard_source(owner, rd.label_count)
            records = [dataclasses.replace(rec, owner=source)
                       for rec in rrset]
            message = rrset_message(source, rd.type_covered, records)
        else:
            message = rrset_message(owner, rd.type_covered, rrset)
        out.append({"message": repr(message), "key": rd.signer_key_id})
    return out


def _rrset_status(rrset: Sequence[ResourceRecord],
                  sigs: Sequence[ResourceRecord],
                  keys: Sequence[PublicKey],
                  cfg: ResolverConfig) -> Tuple[str, Optional[ResourceRecord]]:
    """Best validation outcome over all signatures and keys.

    Returns (Ok, the verifying sig), (UnsupportedAlgorithm, None) when every
    signature uses an algorithm outside the supported set, else (Bogus, None).
    """
    if not sigs:
        return BOGUS, None
    statuses = []
    for sig in sigs:
        per_sig = BOGUS
        for key in keys:
            outcome = validate_rrsig(rrset, sig, key, cfg)
            if outcome == OK:
                return OK, sig
            if outcome == UNSUPPORTED_ALGORITHM:
                per_sig = UNSUPPORTED_ALGORITHM
                break  # algorithm check does not depend on the key
        statuses.append(per_sig)
    if statuses and all(s == UNSUPPORTED_ALGORITHM for s in statuses):
        return UNSUPPORTED_ALGORITHM, None
    return BOGUS, None


# --- chain of trust ----------------------------------------------------------


def _split_dnskey(records: Sequence[ResourceRecord]):
    keys = [r for r in records if r.rtype is RecordType.DNSKEY]
    sigs = [r for r in records
            if r.rtype is RecordType.RRSIG
            and r.rdata.type_covered is RecordType.DNSKEY]
    return keys, sigs


def _public_keys(dnskey_records: Iterable[ResourceRecord],
                 flags: Optional[int] = None) -> List[PublicKey]:
    out = []
    for rec in dnskey_records:
        if rec.rtype is not RecordType.DNSKEY:
            continue
        if flags is not None and rec.rdata.flags != flags:
            continue
        pub = rec.rdata.public_key
        if isinstance(pub, PublicKey):
            out.append(pub)
    return out


def verify_chain(anchor: TrustAnchor, path: Sequence[tuple]):
    """Walk the trust chain root-first, one link per zone.

    Each link is (zone, DNSKEY RRSet with its RRSIGs, DS records for that
    zone). Level 0's DS is always the anchor's. A link passes when some KSK
    DNSKEY matches a DS digest, that KSK's self-signature verifies, and a
    ZSK signature over the key set verifies too. Returns "Valid", or
    ("Abort", level) at the first broken link. An empty path is trivially
    Valid.
    """
    for level, (zone, key_records, ds_records) in enumerate(path):
        dnskeys, sigs = _split_dnskey(key_records)
        ds_set = (anchor.ds0,) if level == 0 else tuple(ds_records)
        digests = {d.rdata.digest for d in ds_set
                   if d.rtype is RecordType.DS}
        anchored_ksk = None
        for rec in dnskeys:
            if rec.rdata.is_ksk and dnskey_digest(zone, rec.rdata) in digests:
                anchored_ksk = rec
                break
        if anchored_ksk is None:
            return ("Abort", level)
        ksk_pub = anchored_ksk.rdata.public_key
        if not isinstance(ksk_pub, PublicKey):
            return ("Abort", level)
        message = rrset_message(zone, RecordType.DNSKEY, dnskeys)
        ksk_ok = any(rd.rdata.signature is not None
                     and verify(rd.rdata.signature, message, ksk_pub)
                     for rd in sigs)
        zsk_ok = any(rd.rdata.signature is not None
                     and verify(rd.rdata.signature, message, pub)
                     for rd in sigs
                     for pub in _public_keys(dnskeys, flags=256))
        if not (ksk_ok and zsk_ok):
            return ("Abort", level)
    return VALID


# --- denial of existence -----------------------------------------------------


def _lca(a: DomainName, b: DomainName) -> DomainName:
    for anc in a.ancestors():
        if anc.is_ancestor_of(b):
            return anc
    return ROOT


def _next_closer(q: DomainName, encloser: DomainName) -> DomainName:
    extra = len(q.labels) - len(encloser.labels)
    if extra <= 0:
        return q
    return DomainName(q.labels[extra - 1:])


def _nsec3_matches(rec: ResourceRecord, name: DomainName) -> bool:
    return rec.owner.labels[0] == nsec3_hash(name, rec.rdata.params)


def _nsec3_covers(rec: ResourceRecord, name: DomainName) -> bool:
    h = nsec3_hash(name, rec.rdata.params)
    return covers_span(rec.owner.labels[0], rec.rdata.next_hashed, h)


def denial_families(records: Iterable[ResourceRecord]) -> Set[str]:
    families = set()
    for rec in records:
        if rec.rtype is RecordType.NSEC:
            families.add("nsec")
        elif rec.rtype is RecordType.NSEC3:
            families.add("nsec3")
    return families


def validate_denial(q: Query, proof: Sequence[ResourceRecord],
                    zone_keys: Sequence[ResourceRecord], cfg: ResolverConfig,
                    zone_apex: Optional[DomainName] = None) -> str:
    """Judge a denial proof (NSEC/NSEC3 records plus their RRSIGs).

    Every denial record must carry a verifying signature whose label count
    matches its owner. A NODATA proof needs a record matching the query name
    without the queried type; a name-error proof needs a record covering the
    query name plus a wildcard-nonexistence cover at the closest encloser.
    Under the Servfail policy a proof mixing both families is rejected
    outright; under Accept each record is judged in its own family's order.
    """
    denials = [r for r in proof if r.rtype in (RecordType.NSEC,
                                               RecordType.NSEC3)]
    sigs = [r for r in proof if r.rtype is RecordType.RRSIG]
    if not denials:
        return INVALID
    if (cfg.mixed_denial_policy == SERVFAIL_ON_MIX
            and len(denial_families(denials)) > 1):
        return INVALID

    keys = _public_keys(zone_keys)
    checked: List[ResourceRecord] = []
    for rec in denials:
        own_sigs = [s for s in sigs
                    if s.owner == rec.owner
                    and s.rdata.type_covered is rec.rtype]
        status, _ = _rrset_status([rec], own_sigs, keys, cfg)
        if status != OK:
            return INVALID
        checked.append(rec)

    nsecs = [r for r in checked if r.rtype is RecordType.NSEC]
    nsec3s = [r for r in checked if r.rtype is RecordType.NSEC3]
    qname = q.qname

    # exact matches prove NODATA (or contradict the denial)
    for rec in nsecs:
        if rec.owner == qname:
            return INVALID if q.qtype in rec.rdata.types else PROVEN_NODATA
    for rec in nsec3s:
        if _nsec3_matches(rec, qname):
            return INVALID if q.qtype in rec.rdata.types else PROVEN_NODATA
    # empty non-terminal: the covering record's next name descends below q
    for rec in nsecs:
        if (covers(rec.owner, rec.rdata.next_name, qname)
                and qname.is_ancestor_of(rec.rdata.next_name)):
            return PROVEN_NODATA

    # name error: find the cover for q and the closest encloser
    ce = None
    for rec in nsecs:
        if covers(rec.owner, rec.rdata.next_name, qname):
            left = _lca(qname, rec.owner)
            right = _lca(qname, rec.rdata.next_name)
            ce = max(left, right, key=lambda n: len(n.labels))
            break
    if ce is None and nsec3s:
        floor = len(zone_apex.labels) if zone_apex is not None else 0
        candidates = [anc for anc in list(qname.ancestors())[1:]
                      if len(anc.labels) >= floor]
        for anc in candidates:
            if (any(_nsec3_matches(rec, anc) for rec in nsec3s)
                    and any(_nsec3_covers(rec, _next_closer(qname, anc))
                            for rec in nsec3s)):
                ce = anc
                break
    if ce is None:
        return INVALID

    wildcard = ce.child("*")
    # a record sitting exactly at *.ce turns the proof into wildcard NODATA:
    # the name would have been synthesized, but the type is absent
    for rec in nsecs:
        if rec.owner == wildcard:
            return INVALID if q.qtype in rec.rdata.types else PROVEN_NODATA
    for rec in nsec3s:
        if _nsec3_matches(rec, wildcard):
            return INVALID if q.qtype in rec.rdata.types else PROVEN_NODATA
    wc_proved = any(covers(rec.owner, rec.rdata.next_name, wildcard)
                    for rec in nsecs)
    wc_proved = wc_proved or any(_nsec3_covers(rec, wildcard)
                                 for rec in nsec3s)
    if not wc_proved:
        return INVALID
    return PROVEN_NONEXISTENT


def denial_evidence_family(q: Query,
                           records: Iterable[ResourceRecord]) -> str:
    """Which family's record carries the evidence about the query name."""
    for rec in records:
        if rec.rtype is RecordType.NSEC:
            if rec.owner == q.qname or covers(rec.owner, rec.rdata.next_name,
                                              q.qname):
                return "nsec"
    for rec in records:
        if rec.rtype is RecordType.NSEC3:
            if _nsec3_matches(rec, q.qname) or _nsec3_covers(rec, q.qname):
                return "nsec3"
    # fall back to the next-closer cover used by hashed name-error proofs
    for rec in records:
        if rec.rtype is RecordType.NSEC3:
            return "nsec3"
    return "none"


# --- record plumbing ---------------------------------------------------------


def describe_record(rec: ResourceRecord) -> str:
    return "%s %s %r" % (rec.owner.text(), rec.rtype.value, rec.rdata)


def _answer_rrset(response: Response, q: Query):
    records = [r for r in response.answer
               if r.owner == q.qname and r.rtype is q.qtype]
    sigs = [r for r in response.answer
            if r.owner == q.qname and r.rtype is RecordType.RRSIG
            and r.rdata.type_covered is q.qtype]
    return records, sigs


# --- the resolver ------------------------------------------------------------


class Resolver:
    """Iterative validating resolver bound to a scheduler and a topology.

    routes maps zone apexes to server identities; the scheduler's rpc
    handler delivers queries to those servers (possibly through the
    adversary). One Resolver instance serves all client activities of a
    scenario and owns one cache per server identity.
    """

    def __init__(self, routes: Dict[DomainName, str], anchor: TrustAnchor,
                 scheduler, trace, cache_enabled: bool = True,
                 nondet_expiry: bool = True) -> None:
        self.routes = dict(routes)
        self.anchor = anchor
        self.scheduler = scheduler
        self.trace = trace
        self.cache_enabled = cache_enabled
        self.nondet_expiry = nondet_expiry
        self.caches: Dict[str, Dict[Tuple[DomainName, RecordType],
                                    CacheEntry]] = {}
        self._versions: Dict[Tuple[str, str, str], int] = {}
        self._zone_families: Dict[DomainName, Set[str]] = {}

    # -- cache primitives (lock contract enforced) ---------------------------

    def _lock_key(self, origin: str, key) -> tuple:
        owner, rtype = key
        return ("rrset", origin, owner.text(), rtype.value)

    def acquire_rrset_lock(self, key, origin: str) -> tuple:
        """Effect tuple: yield it to take the per-RRSet lock."""
        return ("acquire", self._lock_key(origin, key))

    def release_rrset_lock(self, key, origin: str) -> tuple:
        return ("release", self._lock_key(origin, key))

    def _require_lock(self, origin: str, key, op: str) -> None:
        tid = self.scheduler.current_tid
        if tid is None or not self.scheduler.holds_lock(
                tid, self._lock_key(origin, key)):
            raise ContractViolation(
                "cache %s on %s/%s without holding the RRSet lock"
                % (op, origin, key))

    def _version_key(self, origin: str, key) -> Tuple[str, str, str]:
        owner, rtype = key
        return (origin, owner.text(), rtype.value)

    def cache_lookup(self, key, origin_scope: str) -> Optional[CacheEntry]:
        """Raw lookup; Expired entries are reported but never returned."""
        self._require_lock(origin_scope, key, "lookup")
        entry = self.caches.get(origin_scope, {}).get(key)
        version = self._versions.get(self._version_key(origin_scope, key), 0)
        if entry is None or entry.status == EXPIRED:
            self.trace.record("CacheOp", kind="lookup-miss",
                              origin=origin_scope, key=_key_str(key),
                              version=version,
                              stale=entry is not None)
            return None
        self.trace.record("CacheOp", kind="lookup-hit", origin=origin_scope,
                          key=_key_str(key), version=entry.version,
                          validated=entry.validated, status=entry.status,
                          rcode=entry.rcode.value,
                          answer=sorted(describe_record(r)
                                        for r in entry.rrset),
                          authority=sorted(describe_record(r)
                                           for r in entry.authority))
        return entry

    def cache_insert(self, entry: CacheEntry) -> int:
        self._require_lock(entry.origin, entry.key, "insert")
        vkey = self._version_key(entry.origin, entry.key)
        version = self._versions.get(vkey, 0) + 1
        self._versions[vkey] = version
        entry.version = version
        self.caches.setdefault(entry.origin, {})[entry.key] = entry
        self.trace.record("CacheOp", kind="insert", origin=entry.origin,
                          key=_key_str(entry.key), version=version,
                          validated=entry.validated, rcode=entry.rcode.value)
        return version

    def cache_expire(self, key, origin_scope: str) -> None:
        """Atomically replace an entry with its Expired twin."""
        self._require_lock(origin_scope, key, "expire")
        cache = self.caches.get(origin_scope, {})
        entry = cache.get(key)
        if entry is None:
            raise ContractViolation("expire on missing entry %s" % (key,))
        cache[key] = dataclasses.replace(entry, status=EXPIRED)
        self.trace.record("CacheOp", kind="expire", origin=origin_scope,
                          key=_key_str(key), version=entry.version)

    # -- resolution -----------------------------------------------------------

    def resolve(self, q: Query, cfg: ResolverConfig):
        """Coroutine resolving one query; returns a ValidatedResponse."""
        try:
            result = yield from self._iterate(q, cfg)
        except _Bogus as failure:
            self.trace.record("ValidationFailure", qname=q.qname.text(),
                              qtype=q.qtype.value, reason=str(failure),
                              ede=failure.ede)
            servfail = Response(rcode=Rcode.SERVFAIL)
            return ValidatedResponse(servfail, BOGUS, ede=failure.ede)
        return result

    def _iterate(self, q: Query, cfg: ResolverConfig):
        zone = ROOT
        ds_records: Tuple[ResourceRecord, ...] = (self.anchor.ds0,)
        path: List[tuple] = []
        for _ in range(cfg.max_depth):
            server = self.routes.get(zone)
            if server is None:
                raise ResolutionError("no route to zone %s" % zone.text())
            zone_keys: Tuple[ResourceRecord, ...] = ()
            if not q.cd_bit:
                zone_keys = yield from self._trusted_keys(
                    zone, server, ds_records, path, cfg, q)
            response, fetched = yield from self._fetch(server, q, cfg)
            referral = self._classify_referral(zone, q, response)
            if referral is not None:
                cut, cut_ds = referral
                if not q.cd_bit:
                    self._check_ds_signatures(zone, cut, response, zone_keys,
                                              cfg)
                if fetched:
                    yield from self._store(server, q, response,
                                           validated=not q.cd_bit)
                zone = cut
                ds_records = cut_ds
                continue
            result = yield from self._finish(zone, server, q, response,
                                             fetched, zone_keys, cfg)
            return result
        raise ResolutionError("delegation depth exceeded for %s"
                              % q.qname.text())

    # referral handling ------------------------------------------------------

    def _classify_referral(self, zone: DomainName, q: Query,
                           response: Response):
        if response.rcode is Rcode.REFUSED:
            raise ResolutionError("server refused %s" % q.qname.text())
        if response.rcode is not Rcode.NOERROR or response.answer:
            return None
        ns = [r for r in response.authority if r.rtype is RecordType.NS]
        if not ns:
            return None
        cut = ns[0].owner
        if not (zone.is_ancestor_of(cut) and cut != zone
                and cut.is_ancestor_of(q.qname)):
            raise ResolutionError("referral to %s outside the path to %s"
                                  % (cut.text(), q.qname.text()))
        ds = tuple(r for r in response.authority
                   if r.rtype is RecordType.DS and r.owner == cut)
        return cut, ds

    def _check_ds_signatures(self, zone: DomainName, cut: DomainName,
                             response: Response,
                             zone_keys: Sequence[ResourceRecord],
                             cfg: ResolverConfig) -> None:
        ds = [r for r in response.authority
              if r.rtype is RecordType.DS and r.owner == cut]
        sigs = [r for r in response.authority
                if r.rtype is RecordType.RRSIG and r.owner == cut
                and r.rdata.type_covered is RecordType.DS]
        if not ds:
            raise _Bogus("unsigned delegation to %s" % cut.text(),
                         ede="missing DS")
        status, _ = _rrset_status(ds, sigs, _public_keys(zone_keys), cfg)
        if status != OK:
            raise _Bogus("DS set for %s failed validation" % cut.text())

    # trust establishment ------------------------------------------------------

    def _trusted_keys(self, zone: DomainName, server: str,
                      ds_records: Sequence[ResourceRecord],
                      path: List[tuple], cfg: ResolverConfig,
                      original: Query):
        for link in path:
            if link[0] == zone:
                return link[1]
        key_query = Query(zone, RecordType.DNSKEY, cd_bit=False)
        same_target = (original.qname == zone
                       and original.qtype is RecordType.DNSKEY)
        response, fetched = yield from self._fetch(server, key_query, cfg)
        records = [r for r in response.answer
                   if r.owner == zone
                   and r.rtype in (RecordType.DNSKEY, RecordType.RRSIG)]
        key_rrset = tuple(r for r in records
                          if r.rtype is RecordType.DNSKEY
                          or r.rdata.type_covered is RecordType.DNSKEY)
        link = (zone, key_rrset, tuple(ds_records))
        outcome = verify_chain(self.anchor, path + [link])
        if outcome != VALID:
            raise _Bogus("trust chain aborted at level %d for %s"
                         % (outcome[1], zone.text()),
                         ede="DNSKEY validation failure")
        path.append(link)
        if fetched and not same_target:
            yield from self._store(server, key_query, response,
                                   validated=True)
        return key_rrset

    # fetch/store under locks ---------------------------------------------------

    def _visible(self, entry: Optional[CacheEntry], q: Query,
                 cfg: ResolverConfig) -> Optional[CacheEntry]:
        if entry is None:
            return None
        if (not q.cd_bit and cfg.cache_partitioning == BY_VALIDATION_STATE
                and not entry.validated):
            return None
        return entry

    def _fetch(self, server: str, q: Query, cfg: ResolverConfig):
        """Cached fetch of the full query from one server."""
        if not self.cache_enabled:
            response = yield ("rpc", server, q)
            return response, True
        key = (q.qname, q.qtype)
        yield self.acquire_rrset_lock(key, server)
        entry = self._visible(self.cache_lookup(key, server), q, cfg)
        if entry is not None and self.nondet_expiry:
            status = yield ("choose", "expiry:%s" % _key_str(key),
                            (ACTIVE, EXPIRED))
            if status == EXPIRED:
                self.cache_expire(key, server)
                entry = None
        yield self.release_rrset_lock(key, server)
        if entry is not None:
            return entry.as_response(), False
        response = yield ("rpc", server, q)
        return response, True

    def _store(self, server: str, q: Query, response: Response,
               validated: bool):
        key = (q.qname, q.qtype)
        if not self.cache_enabled:
            return
        entry = CacheEntry(key=key, rrset=tuple(response.answer),
                           origin=server, status=ACTIVE, validated=validated,
                           version=0, rcode=response.rcode,
                           authority=tuple(response.authority),
                           additional=tuple(response.additional))
        yield self.acquire_rrset_lock(key, server)
        self.cache_insert(entry)
        yield self.release_rrset_lock(key, server)

    # final answers -----------------------------------------------------------

    def _finish(self, zone: DomainName, server: str, q: Query,
                response: Response, fetched: bool,
                zone_keys: Sequence[ResourceRecord], cfg: ResolverConfig):
        if q.cd_bit:
            if fetched:
                yield from self._store(server, q, response, validated=False)
            return ValidatedResponse(response, INSECURE)

        records, sigs = _answer_rrset(response, q)
        if records:
            state, proof = self._validate_answer(zone, q, response, records,
                                                 sigs, zone_keys, cfg)
        else:
            state, proof = self._validate_denial_response(zone, q, response,
                                                          zone_keys, cfg)
        if fetched:
            yield from self._store(server, q, response,
                                   validated=state == SECURE)
        out = response
        if state == SECURE:
            out = dataclasses.replace(response, ad_bit=True)
        return ValidatedResponse(out, state, proof=tuple(proof))

    def _validate_answer(self, zone: DomainName, q: Query,
                         response: Response,
                         records: Sequence[ResourceRecord],
                         sigs: Sequence[ResourceRecord],
                         zone_keys: Sequence[ResourceRecord],
                         cfg: ResolverConfig):
        keys = _public_keys(zone_keys)
        status, used = _rrset_status(records, sigs, keys, cfg)
        if status == UNSUPPORTED_ALGORITHM:
            if cfg.downgrade_policy == PERMISSIVE:
                self._accept(zone, q, response, INSECURE, (),
                             note="algorithm outside the supported set")
                return INSECURE, [{"check": "downgrade",
                                   "detail": "no supported algorithm"}]
            raise _Bogus("no supported signature algorithm for %s"
                         % q.qname.text(),
                         ede="unsupported DNSKEY algorithm")
        if status != OK:
            raise _Bogus("signature validation failed for %s"
                         % q.qname.text())
        proof = [{"check": "rrsig", "record": describe_record(used),
                  "key": used.rdata.signer_key_id}]
        if used.rdata.label_count < q.qname.label_depth():
            if not self._wildcard_absence_proved(q, used.rdata.label_count,
                                                 response, keys, cfg):
                raise _Bogus("wildcard answer for %s lacks the exact-name "
                             "denial" % q.qname.text())
            proof.append({"check": "wildcard-proof", "qname": q.qname.text()})
        self._accept(zone, q, response, SECURE, proof,
                     signed=signed_messages(records, [used]))
        return SECURE, proof

    def _wildcard_absence_proved(self, q: Query, label_count: int,
                                 response: Response,
                                 keys: Sequence[PublicKey],
                                 cfg: ResolverConfig) -> bool:
        source_ce = DomainName(q.qname.labels[len(q.qname.labels)
                                              - label_count:])
        denials = [r for r in response.authority
                   if r.rtype in (RecordType.NSEC, RecordType.NSEC3)]
        sigs = [r for r in response.authority if r.rtype is RecordType.RRSIG]
        for rec in denials:
            own = [s for s in sigs if s.owner == rec.owner
                   and s.rdata.type_covered is rec.rtype]
            status, _ = _rrset_status([rec], own, keys, cfg)
            if status != OK:
                continue
            if rec.rtype is RecordType.NSEC and covers(
                    rec.owner, rec.rdata.next_name, q.qname):
                return True
            if rec.rtype is RecordType.NSEC3 and _nsec3_covers(
                    rec, _next_closer(q.qname, source_ce)):
                return True
        return False

    def _validate_denial_response(self, zone: DomainName, q: Query,
                                  response: Response,
                                  zone_keys: Sequence[ResourceRecord],
                                  cfg: ResolverConfig):
        denials = [r for r in response.authority
                   if r.rtype in (RecordType.NSEC, RecordType.NSEC3)]
        if cfg.mixed_denial_policy == SERVFAIL_ON_MIX:
            seen = self._zone_families.setdefault(zone, set())
            seen |= denial_families(denials)
            if {"nsec", "nsec3"} <= seen:
                raise _Bogus("denial families mixed across responses from %s"
                             % zone.text(), ede="mixed NSEC/NSEC3 usage")
        outcome = validate_denial(q, response.authority, zone_keys, cfg,
                                  zone_apex=zone)
        if outcome == INVALID:
            raise _Bogus("denial proof for %s rejected" % q.qname.text())
        family = denial_evidence_family(q, denials)
        proof = [{"check": "denial", "outcome": outcome, "family": family,
                  "record": describe_record(rec)} for rec in denials]
        sigs = [r for r in response.authority
                if r.rtype is RecordType.RRSIG]
        signed = []
        for rec in denials:
            own = [s for s in sigs if s.owner == rec.owner
                   and s.rdata.type_covered is rec.rtype]
            signed.extend(signed_messages([rec], own))
        self._accept(zone, q, response, SECURE, proof, family=family,
                     denial=outcome, signed=signed)
        return SECURE, proof

    def _accept(self, zone: DomainName, q: Query, response: Response,
                state: str, proof, family: str = "", denial: str = "",
                note: str = "", signed=()) -> None:
        self.trace.record(
            "AcceptEvent", qname=q.qname.text(), qtype=q.qtype.value,
            rcode=response.rcode.value, zone=zone.text(), security=state,
            family=family, denial=denial, note=note,
            proof=[p.get("record", p.get("detail", "")) for p in proof],
            signed=list(signed),
            answer=[describe_record(r) for r in response.answer],
            authority=[describe_record(r) for r in response.authority])


def _key_str(key) -> str:
    owner, rtype = key
    return "%s/%s" % (owner.text(), rtype.value)
