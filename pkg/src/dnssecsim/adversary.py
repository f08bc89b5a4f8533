"""Dolev-Yao message layer: channels, adversary knowledge, attack scripts.

Traffic between the resolver and the nameservers crosses adversarial
channels: every message is shown to the adversary, whose scripted behaviors
may observe, rewrite, or replace it. Anything the adversary sends must be
derivable from what it has seen plus fresh values it minted itself;
underivable injections raise DerivabilityError so the model cannot cheat.

The knowledge set records clear-text terms only. Hashed owner labels are
atoms with no inverse, private keys never travel, and signature terms are
opaque: observing one does not reveal the key, and only forged (never
verifying) signatures can be built from scratch.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set

from .crypto import (ContractViolation, Digest, PublicKey, Signature,
                     TokenSource)
from .names import (DomainName, Query, RecordType, ResourceRecord, Response,
                    DNSKEYData)
from .zone import Zone, answer_query
from .resolver import describe_record

HONEST = "Honest"
ADVERSARIAL = "Adversarial"


class DerivabilityError(Exception):
    """The adversary tried to send a term it cannot derive."""


@dataclass(frozen=True)
class Channel:
    sender: str
    receiver: str
    mode: str = ADVERSARIAL


@dataclass
class AttackerScript:
    """Declarative attacker behavior, interpreted by the Adversary.

    kind selects the behavior; the remaining fields parameterize it. A
    Passive script only watches. MitmDowngrade rewrites the first signature
    of dual-algorithm answers to target_algorithm. RucInjector answers the
    victim's DNSKEY query (made with CD=1) with fresh unsigned keys, at most
    max_injections times.
    """
    kind: str
    victim: Optional[DomainName] = None
    server: Optional[str] = None  # only act on channels to this server
    target_algorithm: int = 16
    max_injections: int = 1
    injections_done: int = 0


def probe_after(name: DomainName) -> DomainName:
    """A name sorting canonically just past ``name`` and all its descendants.

    Appending "!" (the lowest printable byte we use) to the first label
    lands in the gap before the next sibling, so a denial for the probe
    names the true successor.
    """
    labels = name.labels
    return DomainName((labels[0] + "!",) + labels[1:])


def child_probe(name: DomainName) -> DomainName:
    """A name sorting canonically just below ``name`` itself."""
    return DomainName(("!",) + name.labels)


class KnowledgeSet:
    """Growing set of terms the adversary observed or can derive.

    Atoms are domain names, token strings, public keys, signature terms,
    digest terms, and hashed labels. Messages decompose structurally; the
    closure additionally contains every name reachable by the public probe
    constructors from a known name, and every fresh value the adversary
    minted.
    """

    def __init__(self) -> None:
        self.atoms: Set[object] = set()
        self.minted: Set[object] = set()

    # -- growth ---------------------------------------------------------------

    def add_message(self, msg) -> List[object]:
        """Decompose a message into atoms; returns the newly learned ones."""
        new: List[object] = []
        for atom in _atoms_of(msg):
            if atom not in self.atoms:
                self.atoms.add(atom)
                new.append(atom)
        return new

    def mint(self, atom) -> None:
        self.minted.add(atom)
        self.atoms.add(atom)

    # -- queries ----------------------------------------------------------------

    def knows_name(self, name: DomainName) -> bool:
        return name in self.atoms

    def derivable(self, msg) -> bool:
        return all(self._derivable_atom(a) for a in _atoms_of(msg))

    def _derivable_atom(self, atom) -> bool:
        if atom in self.atoms:
            return True
        if isinstance(atom, DomainName):
            # public constructors applied to a known name
            for known in self.atoms:
                if isinstance(known, DomainName):
                    if child_probe(known) == atom:
                        return True
                    if known.labels and probe_after(known) == atom:
                        return True
            return False
        if isinstance(atom, Signature):
            return atom.forged and self.derivable(atom.message)
        if isinstance(atom, Digest):
            # hashing is a public function over derivable payloads
            return self.derivable(atom.payload)
        return False


def _atoms_of(msg, out: Optional[List[object]] = None) -> List[object]:
    """Structural decomposition of queries, responses, and records."""
    if out is None:
        out = []
    if isinstance(msg, (DomainName, PublicKey, Signature, Digest)):
        out.append(msg)  # atomic terms, never split further
    elif isinstance(msg, Response):
        for rec in msg.all_records():
            _atoms_of(rec, out)
    elif isinstance(msg, Query):
        out.append(msg.qname)
    elif isinstance(msg, ResourceRecord):
        out.append(msg.owner)
        _atoms_of(msg.rdata, out)
    elif dataclasses.is_dataclass(msg) and not isinstance(msg, type):
        for f in dataclasses.fields(msg):
            _atoms_of(getattr(msg, f.name), out)
    elif isinstance(msg, str):
        out.append(msg)
    elif isinstance(msg, (tuple, list, frozenset, set)):
        for part in msg:
            _atoms_of(part, out)
    # ints, enums, bools, None: public constants, not knowledge atoms
    return out


class Adversary:
    """Network attacker: watches adversarial channels, runs scripts."""

    def __init__(self, trace, scripts: Sequence[AttackerScript] = ()) -> None:
        self.trace = trace
        self.scripts = list(scripts)
        self.knowledge = KnowledgeSet()
        self._fresh = TokenSource("adv")

    # -- knowledge plumbing -----------------------------------------------------

    def _learn(self, msg, source: str) -> None:
        new = self.knowledge.add_message(msg)
        names = sorted(a.text() for a in new if isinstance(a, DomainName))
        if new:
            self.trace.record("KnowledgeGrow", source=source, names=names,
                              new_terms=len(new))

    def learn(self, msg, source: str = "client") -> None:
        """Feed a message the adversary received in some other role."""
        self._learn(msg, source)

    def knows(self, name: DomainName) -> bool:
        """True iff the clear name is in the adversary's knowledge closure."""
        return self.knowledge.knows_name(name)

    def fresh_token(self, hint: str) -> str:
        token = self._fresh.fresh(hint)
        self.knowledge.mint(token)
        return token

    def fresh_public_key(self, algorithm: int) -> PublicKey:
        key = PublicKey(key_id=self.fresh_token("key"), algorithm=algorithm)
        self.knowledge.mint(key)
        return key

    def derived_name(self, name: DomainName) -> DomainName:
        """Register a probe name built by a public constructor."""
        if not self.knowledge.derivable(Query(name, RecordType.A)):
            raise DerivabilityError("cannot construct %s" % name.text())
        self.knowledge.mint(name)
        return name

    # -- channel operations ----------------------------------------------------

    def intercept(self, ch: Channel, msg):
        """Take custody of an in-flight message; knowledge grows."""
        if ch.mode != ADVERSARIAL:
            raise ContractViolation("intercept on an honest channel")
        self._learn(msg, source="%s->%s" % (ch.sender, ch.receiver))
        return msg

    def inject(self, ch: Channel, msg) -> None:
        """Deliver a message as if from the channel peer."""
        if not self.knowledge.derivable(msg):
            raise DerivabilityError(
                "injected message contains underivable terms")
        self.trace.record("AdversaryAction", action="inject",
                          channel="%s->%s" % (ch.sender, ch.receiver))

    # -- scripted behaviors -------------------------------------------------------

    def on_response(self, ch: Channel, query: Query,
                    response: Response) -> Response:
        """Run each script over an intercepted response; first rewrite wins."""
        self.intercept(ch, response)
        for script in self.scripts:
            if script.kind == "MitmDowngrade":
                out = self.run_downgrade(script, ch, query, response)
            elif script.kind == "RucInjector":
                out = self.run_ruc(script, ch, query, response)
            else:
                out = None
            if out is not None:
                return out
        return response

    def run_downgrade(self, script: AttackerScript, ch: Channel, query: Query,
                      response: Response) -> Optional[Response]:
        """Rewrite the first signature of a dual-algorithm answer.

        DNSKEY answers are left alone: the attack targets data RRSets, whose
        weakest-algorithm signature decides acceptance downstream.
        """
        if query.qtype is RecordType.DNSKEY:
            return None
        if script.victim is not None and query.qname != script.victim:
            return None
        sigs = [r for r in response.answer if r.rtype is RecordType.RRSIG]
        algorithms = {r.rdata.algorithm for r in sigs}
        if len(algorithms) < 2:
            return None
        first = sigs[0]
        rewritten = dataclasses.replace(
            first, rdata=dataclasses.replace(
                first.rdata, algorithm=script.target_algorithm))
        answer = tuple(rewritten if rec is first else rec
                       for rec in response.answer)
        out = dataclasses.replace(response, answer=answer)
        self.inject(ch, out)
        self.trace.record(
            "AdversaryAction", action="algorithm-rewrite",
            qname=query.qname.text(),
            original=first.rdata.algorithm,
            rewritten=script.target_algorithm,
            record=describe_record(rewritten))
        return out

    def run_ruc(self, script: AttackerScript, ch: Channel, query: Query,
                response: Response) -> Optional[Response]:
        """Replace the victim's DNSKEY response with fresh unsigned keys.

        Fires only for the CD=1 trigger resolution and at most
        max_injections times, mirroring a one-shot on-path poisoning.
        """
        if (query.qtype is not RecordType.DNSKEY
                or script.victim is None
                or query.qname != script.victim
                or not query.cd_bit
                or (script.server is not None and ch.receiver != script.server)
                or script.injections_done >= script.max_injections):
            return None
        fake = []
        for flags in (257, 256):
            rdata = DNSKEYData(flags=flags, protocol=3, algorithm=8,
                               public_key=self.fresh_public_key(8))
            fake.append(ResourceRecord(script.victim, RecordType.DNSKEY,
                                       rdata))
        out = Response(rcode=response.rcode, answer=tuple(fake))
        self.inject(ch, out)
        script.injections_done += 1
        self.trace.record(
            "AdversaryAction", action="ruc-inject",
            qname=query.qname.text(),
            records=[describe_record(r) for r in fake])
        return out


class Network:
    """Delivers resolver queries to authoritative servers.

    Channels to every server are adversarial unless listed in
    honest_servers; honest channels bypass the adversary entirely.
    """

    def __init__(self, servers: Dict[str, Zone], trace,
                 adversary: Optional[Adversary] = None,
                 honest_servers: Iterable[str] = ()) -> None:
        self.servers = dict(servers)
        self.trace = trace
        self.adversary = adversary
        self.honest_servers = set(honest_servers)

    def channel(self, server: str) -> Channel:
        mode = HONEST if server in self.honest_servers else ADVERSARIAL
        return Channel("resolver", server, mode)

    def transmit(self, server: str, query: Query) -> Response:
        if server not in self.servers:
            raise ContractViolation("no server named %r" % server)
        self.trace.record("Query", channel="resolver->%s" % server,
                          qname=query.qname.text(), qtype=query.qtype.value,
                          cd=query.cd_bit)
        ch = self.channel(server)
        if self.adversary is not None and ch.mode == ADVERSARIAL:
            self.adversary.intercept(ch, query)
        response = answer_query(self.servers[server], query)
        if self.adversary is not None and ch.mode == ADVERSARIAL:
            response = self.adversary.on_response(ch, query, response)
        self.trace.record(
            "Response", channel="%s->resolver" % server,
            rcode=response.rcode.value,
            answer=[describe_record(r) for r in response.answer],
            authority=[describe_record(r) for r in response.authority])
        return response
