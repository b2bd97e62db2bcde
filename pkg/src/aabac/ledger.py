"""Two-tier key-authorization plane.

The remote ledger is the registry of namespace/attribute agreements
(consulted at publication and configuration time, never on the hot key
path). The local ledger registers users, vets and signs their key
requests, and appends the validity attributes (Date, IS_VALID) plus the
current epoch. The NOC holds the master secret and issues decryption
keys only for requests carrying a valid local-ledger signature; the key
blob is sealed to the requester's public key and relayed back through
the ledger.

Request envelopes ride in Interest names (signatures and appended
attributes become annotations); response envelopes travel as DataPacket
payloads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import abe, wire
from .crypto import DeterministicRng, Identity, PublicIdentity, seal_to
from .errors import (DuplicatePrefix, DuplicateUser, NotFound, RequestDenied,
                     UnknownLedger, UnknownUser, UntrustedRequest)
from .naming import Annotation, Name, is_prefix_of, parse_name
from .policy import (Attribute, AttributeSet, PolicyAst,
                     policy_attribute_names)

RESERVED_ATTRIBUTE_NAMES = ("epoch", "IS_VALID", "Date")

MS_PER_DAY = 86_400_000


@dataclass
class LedgerRecord:
    user: Name
    pubkey: PublicIdentity
    attrs: AttributeSet
    valid: bool = True
    valid_until: int | None = None


@dataclass(frozen=True)
class NamespaceAgreement:
    prefix: Name
    attribute_universe: frozenset[str]
    policy_template: PolicyAst
    noc: Name

    def __post_init__(self):
        missing = policy_attribute_names(self.policy_template) - self.attribute_universe
        if missing:
            raise ValueError(
                f"policy references attributes outside the universe: {sorted(missing)}")


@dataclass(frozen=True)
class SignedKeyRequest:
    request_name: Name
    requester_sig: bytes
    ledger_sig: bytes | None
    ledger: Name | None
    epoch: int
    appended: AttributeSet

    def signing_bytes(self) -> bytes:
        w = wire.Writer()
        w.str(self.request_name.format())
        strings = self.appended.canonical_strings()
        w.u32(len(strings))
        for s in strings:
            w.str(s)
        w.u64(self.epoch)
        return w.getvalue()

    def requested_attributes(self) -> AttributeSet:
        return request_attributes(self.request_name)

    def user_pubkey_name(self) -> Name:
        value = self.request_name.annotation("user-pub-key")
        if value is None:
            raise ValueError(f"no user-pub-key annotation in {self.request_name}")
        return parse_name(value)

    def data_name(self) -> Name:
        value = self.request_name.annotation("data")
        if value is None:
            raise ValueError(f"no data annotation in {self.request_name}")
        return parse_name(value)


_NON_ATTRIBUTE_KEYS = {"data", "user-pub-key", "Alice-pub-key", "sig",
                       "ledger", "ledger_sig", "epoch"}


def request_attributes(request_name: Name) -> AttributeSet:
    """Attributes carried as annotations of a key-request name."""
    attrs = []
    for c in request_name.annotations():
        if c.key in _NON_ATTRIBUTE_KEYS:
            continue
        attrs.append(Attribute.parse(f"{c.key}={c.value}"))
    return AttributeSet(attrs)


class RemoteLedger:
    """IRB-level registry of namespace agreements."""

    def __init__(self):
        self._agreements: dict[str, NamespaceAgreement] = {}

    def register_agreement(self, agreement: NamespaceAgreement) -> None:
        key = agreement.prefix.format()
        if key in self._agreements:
            raise DuplicatePrefix(f"agreement already registered for {key}")
        self._agreements[key] = agreement

    def lookup(self, prefix: Name) -> NamespaceAgreement:
        agreement = self._agreements.get(prefix.format())
        if agreement is None:
            raise NotFound(f"no agreement for {prefix}")
        return agreement

    def find_for_name(self, name: Name) -> NamespaceAgreement:
        best = None
        for agreement in self._agreements.values():
            if is_prefix_of(agreement.prefix, name):
                if best is None or len(agreement.prefix) > len(best.prefix):
                    best = agreement
        if best is None:
            raise NotFound(f"no agreement covers {name}")
        return best

    def agreements(self) -> list[NamespaceAgreement]:
        return list(self._agreements.values())


class LocalLedger:
    """Institutional attribute authority: user registry and request vetting."""

    def __init__(self, prefix: Name, identity: Identity):
        self.prefix = prefix
        self.identity = identity
        self.users: dict[str, LedgerRecord] = {}
        self._by_pubkey_name: dict[str, str] = {}
        self.current_epoch = 0
        self.date_days: int | None = None
        self.log: list[dict] = []
        self._log_seq = 0

    # -- registry --------------------------------------------------------

    def register_user(self, record: LedgerRecord) -> None:
        key = record.user.format()
        if key in self.users:
            raise DuplicateUser(f"{key} already registered")
        for reserved in RESERVED_ATTRIBUTE_NAMES:
            if reserved in record.attrs:
                raise ValueError(
                    f"attribute {reserved!r} is reserved and injected at request time")
        self.users[key] = record
        self._by_pubkey_name[self.user_pubkey_name(record.user).format()] = key
        self._append_log("register", user=key,
                         attrs=record.attrs.canonical_strings())

    def revoke_user(self, user: Name) -> None:
        record = self.users.get(user.format())
        if record is None:
            raise UnknownUser(f"{user} is not registered")
        record.valid = False
        self._append_log("revoke", user=user.format())

    def lookup_user(self, user: Name) -> LedgerRecord:
        record = self.users.get(user.format())
        if record is None:
            raise UnknownUser(f"{user} is not registered")
        return record

    def user_pubkey_name(self, user: Name) -> Name:
        return user.child("pub_key")

    def find_by_pubkey_name(self, pubkey_name: Name) -> LedgerRecord | None:
        user = self._by_pubkey_name.get(pubkey_name.format())
        return self.users.get(user) if user else None

    # -- request vetting ---------------------------------------------------

    def handle_key_request(self, request_name: Name, requester_sig: bytes,
                           now: int) -> SignedKeyRequest:
        """Vet, stamp, and sign a key request for forwarding to the NOC.

        Denials: unknown_user, bad_signature, revoked, attribute_not_held.
        """
        try:
            pubkey_name = parse_name(request_name.annotation("user-pub-key") or "")
        except Exception:
            self._deny("unknown_user", request_name)
        record = self.find_by_pubkey_name(pubkey_name)
        if record is None:
            self._deny("unknown_user", request_name)
        if not record.pubkey.verify(request_name.format().encode(), requester_sig):
            self._deny("bad_signature", request_name)
        if not record.valid or (record.valid_until is not None
                                and now > record.valid_until):
            self._deny("revoked", request_name)
        requested = request_attributes(request_name)
        for attr in requested:
            if record.attrs.get(attr.name) != attr:
                self._deny("attribute_not_held", request_name,
                           detail=attr.canonical())

        date = self.date_days if self.date_days is not None else now // MS_PER_DAY
        appended = AttributeSet([Attribute.integer("Date", date),
                                 Attribute.tag("IS_VALID")])
        unsigned = SignedKeyRequest(
            request_name=request_name, requester_sig=requester_sig,
            ledger_sig=None, ledger=self.identity.name,
            epoch=self.current_epoch, appended=appended)
        signed = replace(unsigned, ledger_sig=self.identity.sign(unsigned.signing_bytes()))
        self._append_log("sign_request", user=record.user.format(),
                         request=request_name.format(), epoch=signed.epoch,
                         appended=appended.canonical_strings())
        return signed

    def _deny(self, reason: str, request_name: Name, detail: str = ""):
        self._append_log("deny", request=request_name.format(), reason=reason)
        raise RequestDenied(reason, detail)

    def _append_log(self, event: str, **fields) -> None:
        record = {"seq": self._log_seq, "event": event}
        record.update(fields)
        self.log.append(record)
        self._log_seq += 1

    def log_lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True, separators=(",", ":"))
                for r in self.log]


class Noc:
    """Network operations center: master-secret holder and key issuer."""

    def __init__(self, identity: Identity, rng_seed: bytes,
                 pubkey_base: Name | None = None):
        self.identity = identity
        self.params, self._master = abe.setup(rng_seed, pubkey_base)
        self._trusted_ledgers: dict[str, PublicIdentity] = {}
        self.issue_log: list[dict] = []

    def register_ledger(self, ledger: PublicIdentity) -> None:
        self._trusted_ledgers[ledger.name.format()] = ledger

    def encryption_oracle(self) -> abe.SecretOracle:
        """Encryption-side capability handed to publishers along with the
        published params (the reference engine's stand-in for a public key)."""
        return abe.secret_oracle(self._master)

    def issue_key(self, signed_request: SignedKeyRequest,
                  requester: PublicIdentity, rng: DeterministicRng,
                  now: int = 0) -> bytes:
        """Verify the ledger signature, generate the decryption key, and
        seal it to the requester's public key."""
        if signed_request.ledger_sig is None or signed_request.ledger is None:
            raise UntrustedRequest("request is not signed by a local ledger")
        ledger = self._trusted_ledgers.get(signed_request.ledger.format())
        if ledger is None:
            raise UnknownLedger(f"{signed_request.ledger} is not a trusted ledger")
        if not ledger.verify(signed_request.signing_bytes(),
                             signed_request.ledger_sig):
            raise UntrustedRequest("invalid ledger signature")
        if requester.name.child("pub_key") != signed_request.user_pubkey_name():
            raise UntrustedRequest("requester key does not match the request")

        attrs = signed_request.requested_attributes().union(signed_request.appended)
        key = abe.keygen(self._master, attrs, signed_request.epoch,
                         holder=requester.name, issued_at=now)
        self.issue_log.append({
            "request": signed_request.request_name.format(),
            "holder": requester.name.format(),
            "epoch": signed_request.epoch,
        })
        return seal_to(requester, key.serialize(), rng)


# ---------------------------------------------------------------------------
# Name-borne request envelopes (ledger <-> NOC leg)
# ---------------------------------------------------------------------------

def noc_request_name(noc_prefix: Name, signed: SignedKeyRequest) -> Name:
    """Encode a ledger-signed request into the Interest name sent to the NOC."""
    name = noc_prefix.child("issue-key")
    name = name.annotated("request", signed.request_name.format())
    for canonical in signed.appended.canonical_strings():
        key, value = canonical.split("=", 1)
        name = name.annotated(key, value)
    name = name.annotated("epoch", str(signed.epoch))
    name = name.annotated("ledger", signed.ledger.format())
    return name.annotated("ledger_sig", signed.ledger_sig.hex())


def parse_noc_request(name: Name) -> SignedKeyRequest:
    request = name.annotation("request")
    epoch = name.annotation("epoch")
    ledger = name.annotation("ledger")
    ledger_sig = name.annotation("ledger_sig")
    if request is None or epoch is None:
        raise ValueError(f"not a NOC key request: {name}")
    appended = []
    for c in name.annotations():
        if c.key in ("request", "epoch", "ledger", "ledger_sig"):
            continue
        appended.append(Attribute.parse(f"{c.key}={c.value}"))
    return SignedKeyRequest(
        request_name=parse_name(request), requester_sig=b"",
        ledger_sig=bytes.fromhex(ledger_sig) if ledger_sig else None,
        ledger=parse_name(ledger) if ledger else None,
        epoch=int(epoch), appended=AttributeSet(appended))


# ---------------------------------------------------------------------------
# Response envelopes (DataPacket payloads)
# ---------------------------------------------------------------------------

STATUS_OK = "ok"
STATUS_DENIED = "denied"
STATUS_ERROR = "error"


def encode_envelope(status: str, reason: str = "", blob: bytes = b"") -> bytes:
    w = wire.Writer()
    w.str(status)
    w.str(reason)
    w.bytes(blob)
    return w.getvalue()


def decode_envelope(payload: bytes) -> tuple[str, str, bytes]:
    r = wire.Reader(payload)
    status = r.str()
    reason = r.str()
    blob = r.bytes()
    r.expect_done()
    return status, reason, blob
