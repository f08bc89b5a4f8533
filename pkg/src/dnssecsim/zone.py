"""Authoritative zones: file parsing, denial chains, signing, query answering.

A Zone is an ordered collection of RRSets plus the keys that sign them. The
functions here cover the authority side of the model end to end:

 * ``load_zone``        parse the line-oriented zone text format
 * ``build_nsec_chain`` / ``build_nsec3_chain`` / ``build_mixed_chain``
                         install authenticated-denial records
 * ``sign_zone``        mint keys for the DNSKEY records and sign every
                         authoritative RRSet
 * ``ds_for``           produce the delegation-signer records a parent
                         installs for this zone
 * ``answer_query``     the authoritative answer logic (exact match,
                         referral, wildcard synthesis, NODATA, NXDOMAIN)

``answer_query`` is pure and deterministic, which lets the property harness
reuse it as the ground-truth oracle for what a cache entry should contain.
"""

from __future__ import annotations

import dataclasses
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from . import crypto
from .crypto import (
    ContractViolation,
    Digest,
    KeyPair,
    NSEC3Params,
    PublicKey,
    nsec3_hash,
    sign,
)
from .names import (
    AData,
    DNSKEYData,
    DSData,
    DomainName,
    MXData,
    NSData,
    NSECData,
    NSEC3Data,
    ParseError,
    Query,
    Rcode,
    RecordType,
    ResourceRecord,
    Response,
    RRSIGData,
    canonical_sorted,
    closest_encloser,
    covers,
    covers_span,
    parse_name,
    type_bitmap,
)


class ZoneParseError(ValueError):
    """Raised for malformed zone text (with the offending line number)."""


@dataclass
class Zone:
    apex: DomainName
    rrsets: "OrderedDict[Tuple[DomainName, RecordType], Tuple[ResourceRecord, ...]]"
    denial_family: str = "none"  # none | nsec | nsec3 | mixed
    nsec3_params: Optional[NSEC3Params] = None
    # ground truth mapping hashed label -> clear name; never transmitted
    nsec3_preimages: Dict[str, DomainName] = field(default_factory=dict)
    keys: List[KeyPair] = field(default_factory=list)
    signed: bool = False
    # when set, queries strictly inside this canonical interval are answered
    # with a crafted hashed name-error instead of an honest lookup
    malicious_denial_span: Optional[Tuple[DomainName, DomainName]] = None

    # -- structure queries --------------------------------------------------

    def _hashed_owner(self, hashed_label: str) -> DomainName:
        return DomainName((hashed_label,) + self.apex.labels)

    def _hashed_owner_set(self) -> Set[DomainName]:
        return {self._hashed_owner(h) for h in self.nsec3_preimages}

    def owner_names(self) -> List[DomainName]:
        """Clear names that own at least one record, canonically sorted.

        Hashed NSEC3 owners are synthetic and excluded.
        """
        hashed = self._hashed_owner_set()
        seen = {owner for (owner, _rtype) in self.rrsets if owner not in hashed}
        return canonical_sorted(seen)

    def all_names(self) -> List[DomainName]:
        """Owner names plus empty non-terminals (ancestors of owners that
        sit between them and the apex without records of their own)."""
        owners = set(self.owner_names())
        names = set(owners)
        for owner in owners:
            for ancestor in owner.ancestors():
                if ancestor == self.apex:
                    break
                names.add(ancestor)
        names.add(self.apex)
        return canonical_sorted(names)

    def name_exists(self, name: DomainName) -> bool:
        return name in set(self.all_names())

    def get_rrset(self, owner: DomainName, rtype: RecordType) -> Tuple[ResourceRecord, ...]:
        return self.rrsets.get((owner, rtype), ())

    def set_rrset(self, owner: DomainName, rtype: RecordType,
                  records: Sequence[ResourceRecord]) -> None:
        self.rrsets[(owner, rtype)] = tuple(records)

    def drop_rrset(self, owner: DomainName, rtype: RecordType) -> None:
        self.rrsets.pop((owner, rtype), None)

    def sigs_covering(self, owner: DomainName, covered: RecordType) -> Tuple[ResourceRecord, ...]:
        return tuple(rec for rec in self.get_rrset(owner, RecordType.RRSIG)
                     if rec.rdata.type_covered is covered)

    def data_types_at(self, owner: DomainName) -> Set[RecordType]:
        return {rtype for (o, rtype) in self.rrsets
                if o == owner and rtype is not RecordType.RRSIG}

    def delegation_names(self) -> Set[DomainName]:
        hashed = self._hashed_owner_set()
        return {owner for (owner, rtype) in self.rrsets
                if rtype is RecordType.NS and owner != self.apex
                and owner not in hashed}

    @property
    def delegations(self) -> Dict[DomainName, Tuple[Tuple[ResourceRecord, ...],
                                                    Tuple[ResourceRecord, ...]]]:
        """child apex -> (NS records, DS records)."""
        return {cut: (self.get_rrset(cut, RecordType.NS),
                      self.get_rrset(cut, RecordType.DS))
                for cut in self.delegation_names()}

    @property
    def wildcard_names(self) -> Set[DomainName]:
        return {name for name in self.owner_names() if name.is_wildcard}

    def zsks(self) -> List[KeyPair]:
        return [k for k in self.keys if k.role == crypto.ZSK]

    def ksks(self) -> List[KeyPair]:
        return [k for k in self.keys if k.role == crypto.KSK]


# --- parsing -----------------------------------------------------------------


def _parse_rdata(rtype: RecordType, fields: List[str]):
    def want(n: int, shape: str) -> None:
        if len(fields) != n:
            raise ValueError("%s rdata expects %s" % (rtype, shape))

    if rtype is RecordType.A:
        want(1, "ADDRESS")
        return AData(fields[0])
    if rtype is RecordType.NS:
        want(1, "HOSTNAME")
        return NSData(parse_name(fields[0]))
    if rtype is RecordType.MX:
        want(1, "HOSTNAME")
        return MXData(parse_name(fields[0]))
    if rtype is RecordType.DNSKEY:
        want(4, "FLAGS PROTOCOL ALGORITHM KEY")
        return DNSKEYData(flags=int(fields[0]), protocol=int(fields[1]),
                          algorithm=int(fields[2]), public_key=fields[3])
    if rtype is RecordType.DS:
        want(4, "KEYTAG ALGORITHM DIGESTTYPE DIGEST")
        return DSData(key_tag=fields[0], algorithm=int(fields[1]),
                      digest_type=int(fields[2]), digest=fields[3])
    if rtype is RecordType.RRSIG:
        want(4, "TYPE_COVERED ALGORITHM LABELS SIGNER")
        return RRSIGData(type_covered=RecordType.parse(fields[0]),
                         algorithm=int(fields[1]), label_count=int(fields[2]),
                         signer=parse_name(fields[3]))
    if rtype is RecordType.NSEC:
        if len(fields) < 1:
            raise ValueError("NSEC rdata expects NEXT_NAME TYPE...")
        return NSECData(next_name=parse_name(fields[0]),
                        types=type_bitmap(RecordType.parse(t) for t in fields[1:]))
    if rtype is RecordType.NSEC3:
        if len(fields) < 2:
            raise ValueError("NSEC3 rdata expects HASH_PARAMS NEXT_HASH TYPE...")
        return NSEC3Data(params=NSEC3Params.parse(fields[0]),
                         next_hashed=fields[1],
                         types=type_bitmap(RecordType.parse(t) for t in fields[2:]))
    raise ValueError("unhandled record type %s" % rtype)


def load_zone(text: str, apex: Optional[DomainName] = None) -> Zone:
    """Parse zone text into a Zone.

    One record per line: ``OWNER TYPE RDATA...`` with ``//`` comments.
    The apex defaults to the shortest owner name present; pass it explicitly
    for zones (like the root) whose apex cannot be inferred that way.
    """
    rrsets: "OrderedDict[Tuple[DomainName, RecordType], List[ResourceRecord]]" = OrderedDict()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ZoneParseError("line %d: expected OWNER TYPE RDATA..." % lineno)
        try:
            owner = parse_name(parts[0])
            rtype = RecordType.parse(parts[1])
            rdata = _parse_rdata(rtype, parts[2:])
        except (ParseError, ValueError) as exc:
            raise ZoneParseError("line %d: %s" % (lineno, exc)) from exc
        rrsets.setdefault((owner, rtype), []).append(
            ResourceRecord(owner=owner, rtype=rtype, rdata=rdata))

    if not rrsets:
        raise ZoneParseError("zone text contains no records")

    owners = {owner for (owner, _t) in rrsets}
    if apex is None:
        apex = min(owners, key=lambda n: (len(n.labels), n.sort_key()))
    for owner in owners:
        if not apex.is_ancestor_of(owner):
            raise ZoneParseError("owner %s lies outside apex %s" % (owner, apex))

    return Zone(apex=apex,
                rrsets=OrderedDict((k, tuple(v)) for k, v in rrsets.items()))


# --- denial chains -----------------------------------------------------------


def _strip_family(zone: Zone, rtype: RecordType) -> None:
    for key in [k for k in zone.rrsets if k[1] is rtype]:
        del zone.rrsets[key]


def strip_denial(zone: Zone) -> None:
    """Remove all NSEC/NSEC3 records (and stale hashed owners) so a chain can
    be rebuilt from the zone's data records."""
    hashed = zone._hashed_owner_set()
    _strip_family(zone, RecordType.NSEC)
    _strip_family(zone, RecordType.NSEC3)
    for key in [k for k in zone.rrsets if k[0] in hashed]:
        del zone.rrsets[key]
    zone.nsec3_preimages.clear()
    zone.nsec3_params = None
    zone.denial_family = "none"


def _nsec_bitmap(zone: Zone, owner: DomainName) -> Tuple[RecordType, ...]:
    types = zone.data_types_at(owner)
    types.discard(RecordType.NSEC3)
    types.update({RecordType.NSEC, RecordType.RRSIG})
    return type_bitmap(types)


def _nsec3_bitmap(zone: Zone, owner: DomainName) -> Tuple[RecordType, ...]:
    types = zone.data_types_at(owner)
    types.discard(RecordType.NSEC)
    if types:
        types.add(RecordType.RRSIG)
    return type_bitmap(types)


def build_nsec_chain(zone: Zone) -> None:
    """Install a complete NSEC chain: one record per owner name, each
    pointing at the canonically next owner, the last wrapping to the apex."""
    strip_denial(zone)
    names = zone.owner_names()
    if not names:
        raise ContractViolation("cannot chain an empty zone")
    for i, name in enumerate(names):
        next_name = names[(i + 1) % len(names)]
        rdata = NSECData(next_name=next_name, types=_nsec_bitmap(zone, name))
        zone.set_rrset(name, RecordType.NSEC,
                       (ResourceRecord(name, RecordType.NSEC, rdata),))
    zone.denial_family = "nsec"


def _hash_names(zone: Zone, names: Iterable[DomainName],
                params: NSEC3Params) -> List[Tuple[str, DomainName]]:
    pairs = []
    seen: Dict[str, DomainName] = {}
    for name in names:
        h = nsec3_hash(name, params)
        if h in seen and seen[h] != name:
            raise ContractViolation(
                "hash collision between %s and %s" % (seen[h], name))
        seen[h] = name
        pairs.append((h, name))
    pairs.sort(key=lambda p: p[0])
    return pairs


def _install_nsec3(zone: Zone, pairs: List[Tuple[str, DomainName]],
                   params: NSEC3Params) -> None:
    for i, (h, name) in enumerate(pairs):
        next_hashed = pairs[(i + 1) % len(pairs)][0]
        rdata = NSEC3Data(params=params, next_hashed=next_hashed,
                          types=_nsec3_bitmap(zone, name))
        owner = zone._hashed_owner(h)
        zone.nsec3_preimages[h] = name
        zone.set_rrset(owner, RecordType.NSEC3,
                       (ResourceRecord(owner, RecordType.NSEC3, rdata),))


def build_nsec3_chain(zone: Zone, params: NSEC3Params) -> None:
    """Install a complete NSEC3 chain over every name in the zone (owners and
    empty non-terminals), linked in hash order."""
    strip_denial(zone)
    pairs = _hash_names(zone, zone.all_names(), params)
    _install_nsec3(zone, pairs, params)
    zone.nsec3_params = params
    zone.denial_family = "nsec3"


def build_mixed_chain(zone: Zone, assignment: Dict[DomainName, RecordType],
                      params: NSEC3Params) -> None:
    """Install denial records of both families in one zone.

    ``assignment`` maps every owner name to the family (NSEC or NSEC3) of
    the denial record it gets. NSEC records point at the owner's successor
    among ALL owners (the clear chain simply steps over hashed-family
    names); NSEC3-family owners are chained among themselves in hash order.
    An all-NSEC assignment reproduces ``build_nsec_chain`` exactly.
    """
    strip_denial(zone)
    owners = zone.owner_names()
    missing = set(owners) - set(assignment)
    extra = set(assignment) - set(owners)
    if missing or extra:
        raise ContractViolation(
            "assignment must cover the owner names exactly (missing %s, "
            "extra %s)" % (sorted(map(str, missing)), sorted(map(str, extra))))
    bad = {f for f in assignment.values()
           if f not in (RecordType.NSEC, RecordType.NSEC3)}
    if bad:
        raise ContractViolation("assignment families must be NSEC or NSEC3")

    for i, name in enumerate(owners):
        if assignment[name] is not RecordType.NSEC:
            continue
        next_name = owners[(i + 1) % len(owners)]
        rdata = NSECData(next_name=next_name, types=_nsec_bitmap(zone, name))
        zone.set_rrset(name, RecordType.NSEC,
                       (ResourceRecord(name, RecordType.NSEC, rdata),))
    nsec3_set = {n for n, fam in assignment.items()
                 if fam is RecordType.NSEC3}
    if nsec3_set:
        pairs = _hash_names(zone, nsec3_set, params)
        _install_nsec3(zone, pairs, params)
        zone.nsec3_params = params
        zone.denial_family = "mixed"
    else:
        zone.denial_family = "nsec"


def find_gap_salt(chain_names: Sequence[DomainName], terminal: DomainName,
                  covered: Sequence[DomainName], iterations: int = 0,
                  algorithm: int = 1, limit: int = 100000) -> NSEC3Params:
    """Search hash parameters (by iterating candidate salts) until
    ``terminal`` hashes strictly highest among ``chain_names`` and every name
    in ``covered`` lands inside the terminal record's wrap-around span.

    Hash chain positions are parameter-dependent, so whoever picks the salt
    picks the geometry; this search makes that malleability concrete.
    """
    for i in range(limit):
        params = NSEC3Params(algorithm=algorithm, iterations=iterations,
                             salt="salt%d" % i)
        hashes = [nsec3_hash(n, params) for n in chain_names]
        top, low = max(hashes), min(hashes)
        if nsec3_hash(terminal, params) != top or hashes.count(top) > 1:
            continue
        if all(covers_span(top, low, nsec3_hash(c, params)) for c in covered):
            return params
    raise ContractViolation("no salt found within %d candidates" % limit)


# --- signing -----------------------------------------------------------------


def rrset_message(owner: DomainName, rtype: RecordType,
                  records: Sequence[ResourceRecord]) -> tuple:
    """Canonical immutable term standing for an RRSet's signed content."""
    return ("rrset", owner.text(), rtype.value,
            tuple(sorted(repr(rec.rdata) for rec in records)))


def dnskey_digest(owner: DomainName, rdata: DNSKEYData) -> Digest:
    """Digest term binding a DNSKEY record, as carried in DS records."""
    key = rdata.public_key
    key_id = key.key_id if isinstance(key, PublicKey) else key
    return crypto.hash_term(("dnskey", owner.text(), rdata.flags,
                             rdata.algorithm, key_id))


def _unsigned_glue(zone: Zone, owner: DomainName, rtype: RecordType) -> bool:
    """True for records the authority serves but does not sign: delegation
    NS sets and anything below a zone cut (glue)."""
    cuts = zone.delegation_names()
    if owner in cuts:
        return rtype not in (RecordType.DS, RecordType.NSEC, RecordType.NSEC3)
    return any(cut != owner and cut.is_ancestor_of(owner) for cut in cuts)


def dnskey_record(apex: DomainName, key: KeyPair) -> ResourceRecord:
    rdata = DNSKEYData(flags=key.flags, protocol=3, algorithm=key.algorithm,
                       public_key=key.public)
    return ResourceRecord(apex, RecordType.DNSKEY, rdata)


def sign_zone(zone: Zone, zsk: KeyPair, ksk: KeyPair,
              extra_zsks: Sequence[KeyPair] = ()) -> Zone:
    """Install the DNSKEY RRSet for the given keys and sign every
    authoritative RRSet.

    Existing RRSIG and DNSKEY records (for example parsed annotations) are
    replaced. Each RRSet gets one RRSIG per zone-signing key; the DNSKEY
    RRSet additionally gets one per key-signing key. ``extra_zsks`` lets a
    zone publish and sign under several algorithms at once. RRSIG label
    counts exclude a leading wildcard label. Returns the zone.
    """
    if zsk.role != crypto.ZSK:
        raise ContractViolation("zsk argument has role %s" % zsk.role)
    if ksk.role != crypto.KSK:
        raise ContractViolation("ksk argument has role %s" % ksk.role)
    for key in extra_zsks:
        if key.role != crypto.ZSK:
            raise ContractViolation("extra signing keys must be ZSKs")

    _strip_family(zone, RecordType.RRSIG)
    zone.keys = [zsk] + list(extra_zsks) + [ksk]
    zone.set_rrset(zone.apex, RecordType.DNSKEY,
                   [dnskey_record(zone.apex, key) for key in zone.keys])

    zsks = zone.zsks()
    dnskey_key = (zone.apex, RecordType.DNSKEY)
    sigs_by_owner: Dict[DomainName, List[ResourceRecord]] = {}
    for (owner, rtype), records in list(zone.rrsets.items()):
        if rtype is RecordType.RRSIG or _unsigned_glue(zone, owner, rtype):
            continue
        signers = zsks + zone.ksks() if (owner, rtype) == dnskey_key else zsks
        message = rrset_message(owner, rtype, records)
        for key in signers:
            rdata = RRSIGData(type_covered=rtype,
                              algorithm=key.algorithm,
                              label_count=owner.label_depth(),
                              signer=zone.apex,
                              signature=sign(message, key),
                              signer_key_id=key.key_id)
            sigs_by_owner.setdefault(owner, []).append(
                ResourceRecord(owner, RecordType.RRSIG, rdata))
    for owner, sigs in sigs_by_owner.items():
        zone.set_rrset(owner, RecordType.RRSIG, sigs)
    zone.signed = True
    return zone


def ds_for(zone: Zone) -> Tuple[ResourceRecord, ...]:
    """DS records a parent installs at this zone's delegation point: one per
    key-signing key, binding the key's DNSKEY record by digest."""
    if not zone.signed:
        raise ContractViolation("ds_for needs a signed zone")
    records = []
    for key in zone.ksks():
        rdata = DSData(key_tag=key.key_id,
                       algorithm=key.algorithm,
                       digest_type=2,
                       digest=dnskey_digest(zone.apex,
                                            dnskey_record(zone.apex, key).rdata))
        records.append(ResourceRecord(zone.apex, RecordType.DS, rdata))
    if not records:
        raise ContractViolation("zone %s has no key-signing key" % zone.apex)
    return tuple(records)


# --- authoritative answers ---------------------------------------------------


def _with_sigs(zone: Zone, records: Sequence[ResourceRecord],
               covered: RecordType) -> Tuple[ResourceRecord, ...]:
    if not records:
        return ()
    owner = records[0].owner
    return tuple(records) + zone.sigs_covering(owner, covered)


def _nsec_records(zone: Zone) -> List[ResourceRecord]:
    return [recs[0] for (owner, rtype), recs in zone.rrsets.items()
            if rtype is RecordType.NSEC]


def _nsec3_records(zone: Zone) -> List[ResourceRecord]:
    return [recs[0] for (owner, rtype), recs in zone.rrsets.items()
            if rtype is RecordType.NSEC3]


def _find_nsec_cover(zone: Zone, name: DomainName) -> Optional[ResourceRecord]:
    for rec in _nsec_records(zone):
        if covers(rec.owner, rec.rdata.next_name, name):
            return rec
    return None


def _find_nsec3_cover(zone: Zone, name: DomainName) -> Optional[ResourceRecord]:
    params = zone.nsec3_params
    if params is None:
        return None
    h = nsec3_hash(name, params)
    for rec in _nsec3_records(zone):
        if covers_span(rec.owner.labels[0], rec.rdata.next_hashed, h):
            return rec
    return None


def _find_nsec3_match(zone: Zone, name: DomainName) -> Optional[ResourceRecord]:
    params = zone.nsec3_params
    if params is None:
        return None
    owner = zone._hashed_owner(nsec3_hash(name, params))
    recs = zone.get_rrset(owner, RecordType.NSEC3)
    return recs[0] if recs else None


def _denial_authority(zone: Zone,
                      records: Iterable[Optional[ResourceRecord]]) -> Tuple[ResourceRecord, ...]:
    out: List[ResourceRecord] = []
    for rec in records:
        if rec is None or rec in out:
            continue
        out.append(rec)
    result: List[ResourceRecord] = []
    for rec in out:
        result.append(rec)
        result.extend(zone.sigs_covering(rec.owner, rec.rtype))
    return tuple(result)


def _next_closer(q: DomainName, encloser: DomainName) -> DomainName:
    """The descendant of ``encloser`` one label down the path toward ``q``."""
    extra = len(q.labels) - len(encloser.labels)
    if extra <= 0:
        return q
    return DomainName(q.labels[extra - 1:])


def _nxdomain_proof(zone: Zone, q: DomainName, ce: DomainName,
                    families: Tuple[str, ...] = ("nsec", "nsec3"),
                    ) -> Optional[Tuple[ResourceRecord, ...]]:
    """A name-error proof: the record covering the encloser gap plus the
    wildcard-nonexistence record.

    Pure zones prove both pieces in their own family. A zone carrying both
    chains contributes whichever family can prove each piece, preferring the
    plain chain for the query cover, so its responses can legitimately mix
    record families. Whenever a hashed piece is used, the closest-encloser
    match record comes along.
    """
    wildcard = ce.child("*")
    use_nsec = "nsec" in families and zone.denial_family in ("nsec", "mixed")
    use_nsec3 = "nsec3" in families and zone.denial_family in ("nsec3", "mixed")

    need_ce_match = False
    cover_q = _find_nsec_cover(zone, q) if use_nsec else None
    if cover_q is None and use_nsec3:
        cover_q = _find_nsec3_cover(zone, _next_closer(q, ce))
        need_ce_match = cover_q is not None
    if cover_q is None:
        return None

    cover_wc = _find_nsec_cover(zone, wildcard) if use_nsec else None
    if cover_wc is None and use_nsec3:
        cover_wc = _find_nsec3_cover(zone, wildcard)
        need_ce_match = need_ce_match or cover_wc is not None
    if cover_wc is None:
        return None

    pieces: List[Optional[ResourceRecord]] = [cover_q, cover_wc]
    if need_ce_match:
        match_ce = _find_nsec3_match(zone, ce)
        if match_ce is None:
            return None
        pieces.insert(0, match_ce)
    return _denial_authority(zone, pieces)


def _nodata_proof(zone: Zone, q: DomainName) -> Tuple[ResourceRecord, ...]:
    exact_nsec = zone.get_rrset(q, RecordType.NSEC)
    if exact_nsec:
        return _denial_authority(zone, [exact_nsec[0]])
    match = _find_nsec3_match(zone, q)
    if match is not None:
        return _denial_authority(zone, [match])
    # empty non-terminal under an NSEC-only chain: the covering record's next
    # name descends below q, which is the standard proof shape for this case
    return _denial_authority(zone, [_find_nsec_cover(zone, q)])


def _delegation_cut(zone: Zone, q: DomainName) -> Optional[DomainName]:
    cuts = zone.delegation_names()
    found = None
    for ancestor in q.ancestors():
        if ancestor == zone.apex:
            break
        if ancestor in cuts:
            found = ancestor  # keep climbing; the cut nearest the apex wins
    return found


def _referral(zone: Zone, cut: DomainName) -> Response:
    authority: List[ResourceRecord] = list(zone.get_rrset(cut, RecordType.NS))
    authority += _with_sigs(zone, zone.get_rrset(cut, RecordType.DS),
                            RecordType.DS)
    additional: List[ResourceRecord] = []
    for ns in zone.get_rrset(cut, RecordType.NS):
        glue = zone.get_rrset(ns.rdata.host, RecordType.A)
        additional.extend(g for g in glue if g not in additional)
    return Response(rcode=Rcode.NOERROR, authority=tuple(authority),
                    additional=tuple(additional))


def answer_query(zone: Zone, query: Query) -> Response:
    """Authoritative answer for ``query`` from this zone's data.

    Out-of-zone names are refused. Names under a delegation produce a
    referral (except DS lookups at the cut itself, which the parent owns).
    Nonexistent names are answered with the zone's denial records, via
    wildcard synthesis when a wildcard applies.
    """
    q = query.qname
    if not zone.apex.is_ancestor_of(q):
        return Response(rcode=Rcode.REFUSED)

    cut = _delegation_cut(zone, q)
    if cut is not None and not (q == cut and query.qtype is RecordType.DS):
        return _referral(zone, cut)

    span = zone.malicious_denial_span
    if span is not None:
        start, end = span
        if covers(start, end, q):
            # crafted name error: present the zone's real (signed) hashed
            # denial records as if q did not exist, claiming the apex as
            # closest encloser
            proof = _nxdomain_proof(zone, q, zone.apex, families=("nsec3",))
            if proof is not None:
                return Response(rcode=Rcode.NXDOMAIN, authority=proof)

    exact = zone.get_rrset(q, query.qtype)
    if exact:
        return Response(rcode=Rcode.NOERROR,
                        answer=_with_sigs(zone, exact, query.qtype))

    if zone.name_exists(q):
        return Response(rcode=Rcode.NOERROR, authority=_nodata_proof(zone, q))

    ce = closest_encloser(zone.all_names(), q)
    wildcard = ce.child("*")
    wc_records = zone.get_rrset(wildcard, query.qtype)
    if wc_records:
        answer = [dataclasses.replace(rec, owner=q) for rec in wc_records]
        answer += [dataclasses.replace(sig, owner=q)
                   for sig in zone.sigs_covering(wildcard, query.qtype)]
        if zone.denial_family in ("nsec", "mixed"):
            proof = _denial_authority(zone, [_find_nsec_cover(zone, q)])
        else:
            proof = _denial_authority(
                zone, [_find_nsec3_cover(zone, _next_closer(q, ce))])
        return Response(rcode=Rcode.NOERROR, answer=tuple(answer),
                        authority=proof)

    if zone.name_exists(wildcard):
        # a wildcard exists but lacks the queried type: no such data
        no_exact = (_find_nsec_cover(zone, q)
                    if zone.denial_family in ("nsec", "mixed")
                    else _find_nsec3_cover(zone, _next_closer(q, ce)))
        exact_wc = zone.get_rrset(wildcard, RecordType.NSEC)
        wc_proof = exact_wc[0] if exact_wc else _find_nsec3_match(zone, wildcard)
        return Response(rcode=Rcode.NOERROR,
                        authority=_denial_authority(zone, [no_exact, wc_proof]))

    proof = _nxdomain_proof(zone, q, ce)
    if proof is None:
        if zone.denial_family == "none":
            return Response(rcode=Rcode.NXDOMAIN)
        raise ContractViolation("zone %s cannot prove %s nonexistent"
                                % (zone.apex, q))
    return Response(rcode=Rcode.NXDOMAIN, authority=proof)
