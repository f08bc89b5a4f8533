"""Domain names, canonical ordering, and the DNS record/message vocabulary.

Everything here is a plain immutable value; the rest of the package builds on
these types. Canonical ordering follows RFC 4034 section 6.1: names compare
label by label starting from the rightmost (most significant) label, bytewise
within a label, so a zone apex sorts before all of its children and the
wildcard label "*" sorts before alphanumeric labels.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple


class ParseError(ValueError):
    """Raised for malformed domain-name text."""


class OutOfZone(ValueError):
    """Raised when a name is not at or below the zone apex in question."""


@functools.total_ordering
@dataclass(frozen=True)
class DomainName:
    """A domain name as an ordered label tuple, leftmost label first.

    The root is the empty tuple. ``DomainName(("x", "w", "example"))`` is
    x.w.example. Labels are stored lower-cased; comparison and equality are
    therefore case-insensitive by construction.
    """

    labels: Tuple[str, ...]

    def __post_init__(self) -> None:
        for label in self.labels:
            if label == "":
                raise ParseError("empty label in %r" % (self.labels,))
            if label != label.lower():
                raise ParseError("labels must be lower-cased: %r" % (label,))

    @property
    def is_root(self) -> bool:
        return not self.labels

    def text(self) -> str:
        """Dotted text form; the root renders as '.'."""
        return ".".join(self.labels) if self.labels else "."

    def sort_key(self) -> Tuple[str, ...]:
        """Key realizing the canonical order: labels reversed (root first)."""
        return tuple(reversed(self.labels))

    def parent(self) -> "DomainName":
        if self.is_root:
            raise ValueError("the root has no parent")
        return DomainName(self.labels[1:])

    def ancestors(self) -> Iterable["DomainName"]:
        """All ancestors of this name, self first, root last."""
        for i in range(len(self.labels) + 1):
            yield DomainName(self.labels[i:])

    def is_ancestor_of(self, other: "DomainName") -> bool:
        """True if ``other`` is at or below this name."""
        n = len(self.labels)
        if n == 0:
            return True
        return other.labels[-n:] == self.labels if len(other.labels) >= n else False

    def child(self, label: str) -> "DomainName":
        return DomainName((label.lower(),) + self.labels)

    @property
    def is_wildcard(self) -> bool:
        return bool(self.labels) and self.labels[0] == "*"

    def label_depth(self) -> int:
        """Label count with a leading wildcard label excluded."""
        if self.is_wildcard:
            return len(self.labels) - 1
        return len(self.labels)

    def __lt__(self, other: "DomainName") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return self.text()

    def __repr__(self) -> str:
        return "DomainName(%s)" % self.text()


ROOT = DomainName(())


def parse_name(text: str) -> DomainName:
    """Parse dotted-name text into a DomainName, lower-casing labels.

    A single "." denotes the root. A trailing dot (absolute-name form) is
    accepted and stripped. Empty labels anywhere else raise ParseError.
    """
    if not text:
        raise ParseError("empty name")
    if text == ".":
        return ROOT
    if text.endswith("."):
        text = text[:-1]
    labels = text.split(".")
    if any(label == "" for label in labels):
        raise ParseError("empty label in %r" % text)
    return DomainName(tuple(label.lower() for label in labels))


def canonical_cmp(a: DomainName, b: DomainName) -> int:
    """Three-way canonical comparison: -1, 0, or 1."""
    ka, kb = a.sort_key(), b.sort_key()
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


def canonical_sorted(names: Iterable[DomainName]) -> list:
    return sorted(names, key=lambda n: n.sort_key())


def closest_encloser(zone_names: Iterable[DomainName], q: DomainName) -> DomainName:
    """Longest existing ancestor of ``q`` among ``zone_names``.

    ``q`` counts as its own ancestor. Raises OutOfZone when no ancestor of
    ``q`` (not even an apex) is present.
    """
    present = set(zone_names)
    for candidate in q.ancestors():
        if candidate in present:
            return candidate
    raise OutOfZone("%s has no ancestor in the zone" % q)


def covers_span(owner_key, next_key, q_key) -> bool:
    """True when q_key falls strictly inside the half-open gap between two
    chain keys, wrap-aware.

    Works for any totally ordered keys: canonical name keys for clear chains,
    hash strings for hashed chains. When owner_key >= next_key the record is
    the chain's wrap-around, covering everything after the owner plus
    everything before the next key (for equal keys, a one-element chain,
    that is everything except the owner itself).
    """
    if owner_key < next_key:
        return owner_key < q_key < next_key
    return q_key > owner_key or q_key < next_key


def covers(owner: DomainName, next_name: DomainName, q: DomainName) -> bool:
    """True when q falls strictly inside the canonical gap (owner, next)."""
    return covers_span(owner.sort_key(), next_name.sort_key(), q.sort_key())


class RecordType(enum.Enum):
    """Closed record-type vocabulary; unknown tags are rejected at parse."""

    A = "A"
    NS = "NS"
    MX = "MX"
    DNSKEY = "DNSKEY"
    DS = "DS"
    RRSIG = "RRSIG"
    NSEC = "NSEC"
    NSEC3 = "NSEC3"

    @classmethod
    def parse(cls, tag: str) -> "RecordType":
        try:
            return cls(tag.upper())
        except ValueError:
            raise ParseError("unknown record type %r" % tag) from None

    def __str__(self) -> str:
        return self.value


class Rcode(enum.Enum):
    NOERROR = "NOERROR"
    NXDOMAIN = "NXDOMAIN"
    SERVFAIL = "SERVFAIL"
    REFUSED = "REFUSED"

    def __str__(self) -> str:
        return self.value


# --- rdata payloads -------------------------------------------------------
#
# One frozen dataclass per record type. NSEC3 owner names are carried in
# hashed form only (the clear owner never appears on the wire), which is what
# makes hashed denial non-enumerable for the adversary.


@dataclass(frozen=True)
class AData:
    address: str  # symbolic address token


@dataclass(frozen=True)
class NSData:
    host: DomainName


@dataclass(frozen=True)
class MXData:
    host: DomainName


@dataclass(frozen=True)
class DNSKEYData:
    flags: int  # 256 = ZSK, 257 = KSK
    protocol: int
    algorithm: int
    public_key: object  # PublicKey once signed; str token when parsed from text

    @property
    def is_ksk(self) -> bool:
        return self.flags == 257


@dataclass(frozen=True)
class DSData:
    key_tag: str  # opaque annotation, no semantics
    algorithm: int
    digest_type: int
    digest: object  # Digest term once wired; str token when parsed from text


@dataclass(frozen=True)
class RRSIGData:
    type_covered: RecordType
    algorithm: int
    label_count: int
    signer: DomainName
    signature: object = None  # Signature term; None for parsed annotations
    signer_key_id: Optional[str] = None


@dataclass(frozen=True)
class NSECData:
    next_name: DomainName
    types: Tuple[RecordType, ...]  # kept sorted by tag for stable equality


@dataclass(frozen=True)
class NSEC3Data:
    params: "object"  # crypto.NSEC3Params
    next_hashed: str
    types: Tuple[RecordType, ...]


@dataclass(frozen=True)
class ResourceRecord:
    owner: DomainName
    rtype: RecordType
    rdata: object

    def __repr__(self) -> str:
        return "<%s %s %r>" % (self.owner, self.rtype, self.rdata)


def type_bitmap(types: Iterable[RecordType]) -> Tuple[RecordType, ...]:
    """Stable, duplicate-free bitmap representation."""
    return tuple(sorted(set(types), key=lambda t: t.value))


@dataclass(frozen=True)
class Query:
    qname: DomainName
    qtype: RecordType
    cd_bit: bool = False
    do_bit: bool = True
    qid: str = ""


@dataclass(frozen=True)
class Response:
    rcode: Rcode
    answer: Tuple[ResourceRecord, ...] = ()
    authority: Tuple[ResourceRecord, ...] = ()
    additional: Tuple[ResourceRecord, ...] = ()
    ad_bit: bool = False

    def all_records(self) -> Tuple[ResourceRecord, ...]:
        return self.answer + self.authority + self.additional


def group_rrsets(records: Sequence[ResourceRecord]):
    """Group a flat record list into ((owner, rtype) -> [records]) preserving
    order, with RRSIGs attached to the RRSet they cover.

    Returns a list of (owner, rtype, data_records, rrsig_records) tuples.
    """
    groups: dict = {}
    order: list = []
    for rec in records:
        if rec.rtype is RecordType.RRSIG:
            key = (rec.owner, rec.rdata.type_covered)
        else:
            key = (rec.owner, rec.rtype)
        if key not in groups:
            groups[key] = ([], [])
            order.append(key)
        data, sigs = groups[key]
        if rec.rtype is RecordType.RRSIG:
            sigs.append(rec)
        else:
            data.append(rec)
    return [(owner, rtype, tuple(groups[(owner, rtype)][0]), tuple(groups[(owner, rtype)][1]))
            for owner, rtype in order]
