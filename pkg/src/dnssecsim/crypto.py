"""Symbolic cryptography: keys, signature terms, digests, denial hashing.

Signing is modeled in the Dolev-Yao style. A Signature is an opaque frozen
term recording exactly what was signed and with which key; ``verify`` is true
iff the term was produced by ``sign`` under the matching private key for the
same message. There is no byte-level crypto anywhere, so an adversary can
only produce a verifying signature by actually holding the private key.

The one place real hashing appears is NSEC3 owner hashing: the default
algorithm is a truncated SHA-256 over (salt, iterations, name), which gives
hashed denial chains a genuine preimage-resistant flavor (needed for salt
searches in attack replays) while staying deterministic across runs. The
algorithm table is open for registration so tests can install a transparent
oracle hash next to the real one.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from typing import Callable, Dict

from .names import DomainName


class ContractViolation(AssertionError):
    """An internal invariant of the model was broken."""


class TokenSource:
    """Deterministic fresh-value generator (a counter with a prefix).

    Every fresh key id, nonce, and query id in a run comes from one of
    these, so a fixed seed reproduces the exact same terms.
    """

    def __init__(self, prefix: str = "t"):
        self._prefix = prefix
        self._counter = itertools.count()

    def fresh(self, hint: str = "") -> str:
        n = next(self._counter)
        if hint:
            return "%s-%s-%d" % (self._prefix, hint, n)
        return "%s-%d" % (self._prefix, n)


@dataclass(frozen=True)
class PublicKey:
    key_id: str
    algorithm: int


@dataclass(frozen=True)
class PrivateKey:
    key_id: str
    algorithm: int


ZSK = "ZSK"
KSK = "KSK"


@dataclass(frozen=True)
class KeyPair:
    """Both halves of a signing key plus its role in the zone.

    Zone authorities hold KeyPairs; only the public half ever appears in a
    message, so the private handle never enters adversary knowledge.
    """

    key_id: str
    role: str  # ZSK or KSK
    algorithm: int
    private: PrivateKey
    public: PublicKey

    @property
    def flags(self) -> int:
        return 257 if self.role == KSK else 256


def keygen(role: str, algorithm: int, key_id: str) -> KeyPair:
    """Mint a key pair; the shared key_id ties the halves together."""
    if role not in (ZSK, KSK):
        raise ContractViolation("key role must be ZSK or KSK, not %r" % role)
    return KeyPair(key_id=key_id, role=role, algorithm=algorithm,
                   private=PrivateKey(key_id, algorithm),
                   public=PublicKey(key_id, algorithm))


@dataclass(frozen=True)
class Signature:
    """Opaque signature term.

    ``forged`` marks terms an adversary fabricated without the private key:
    they are syntactically signatures (they parse, they transmit) but
    ``verify`` rejects them unconditionally.
    """

    message: object
    key_id: str
    algorithm: int
    forged: bool = False


def sign(canonical: object, key: KeyPair) -> Signature:
    """Sign a canonical message term with the pair's private half."""
    return Signature(message=canonical, key_id=key.private.key_id,
                     algorithm=key.private.algorithm)


def forge(canonical: object, claimed_key_id: str, algorithm: int) -> Signature:
    """Fabricate a signature term without the key. Never verifies."""
    return Signature(message=canonical, key_id=claimed_key_id,
                     algorithm=algorithm, forged=True)


def verify(sig: Signature, canonical: object, pubkey: PublicKey) -> bool:
    """True iff ``sig`` was honestly produced over ``canonical`` with the
    private half of ``pubkey`` (same key_id, same algorithm)."""
    if sig.forged:
        return False
    return (sig.message == canonical
            and sig.key_id == pubkey.key_id
            and sig.algorithm == pubkey.algorithm)


@dataclass(frozen=True)
class Digest:
    """Opaque collision-free digest term (symbolic hash)."""

    payload: object


def hash_term(data: object) -> Digest:
    return Digest(payload=data)


# --- NSEC3 owner hashing ----------------------------------------------------


@dataclass(frozen=True)
class NSEC3Params:
    algorithm: int
    iterations: int
    salt: str

    def text(self) -> str:
        return "%d,%d,%s" % (self.algorithm, self.iterations, self.salt or "-")

    @classmethod
    def parse(cls, text: str) -> "NSEC3Params":
        parts = text.split(",")
        if len(parts) != 3:
            raise ValueError("bad NSEC3 parameter triple %r" % text)
        salt = "" if parts[2] == "-" else parts[2]
        return cls(algorithm=int(parts[0]), iterations=int(parts[1]), salt=salt)


HashFn = Callable[[str, int, str], str]

_NSEC3_ALGORITHMS: Dict[int, HashFn] = {}


def register_nsec3_algorithm(code: int, fn: HashFn) -> None:
    """Install (or replace) the hash behind an NSEC3 algorithm code."""
    _NSEC3_ALGORITHMS[code] = fn


def _sha256_hash(name_text: str, iterations: int, salt: str) -> str:
    digest = ("%s|%s" % (salt, name_text)).encode()
    for _ in range(iterations + 1):
        digest = hashlib.sha256(digest).digest()
    return digest.hex()[:16]


register_nsec3_algorithm(1, _sha256_hash)


def nsec3_hash(name: DomainName, params: NSEC3Params) -> str:
    """Hashed owner label for ``name`` under ``params``."""
    try:
        fn = _NSEC3_ALGORITHMS[params.algorithm]
    except KeyError:
        raise ContractViolation(
            "no NSEC3 hash registered for algorithm %d" % params.algorithm
        ) from None
    return fn(name.text(), params.iterations, params.salt)
