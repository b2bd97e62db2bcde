"""Pluggable attribute-based encryption engine.

The reference engine is a functional model of ciphertext-policy ABE:
per-attribute secrets are a keyed PRF of the master seed, the content
secret is Shamir-shared over the compiled threshold tree (or-nodes copy,
and-nodes use a random degree n-1 polynomial), each leaf share is
AEAD-wrapped under a key derived from that leaf's attribute secret, and
the payload is AEAD-encrypted under a key derived from the content
secret. Decryption succeeds exactly when the key's attributes satisfy
the tree.

Known, documented limitation: this engine is NOT collusion resistant —
two keys can pool attribute secrets. The interface (setup / keygen /
encrypt / decrypt) is what a pairing-based engine would slot in behind.

Every ciphertext policy is conjoined with "epoch >= <ciphertext epoch>"
before compilation, and every key carries bag-of-bits epoch attributes,
so a key issued at epoch k decrypts ciphertexts of epoch <= k and
nothing newer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from . import wire
from .crypto import (FIELD_PRIME, NONCE_SIZE, SUITE, DeterministicRng,
                     aead_open, aead_seal, decode_field, derive, encode_field,
                     prf_field)
from .errors import (IntegrityError, ParamsMismatch, PolicyNotSatisfied,
                     UnsupportedThreshold)
from .naming import Name, parse_name
from .policy import (And, AttributeSet, Attribute, LeafCmp, PolicyAst,
                     PolicyTree, TreeLeaf, TreeNode, compile_policy,
                     materialize_all, parse_policy, print_policy, tree_leaves)

MODE_DIRECT = "direct"
MODE_HYBRID = "hybrid"

_CONTENT_KEY_MARKER = b"aabac.content-key.v1"

SecretOracle = Callable[[str], int]


@dataclass(frozen=True)
class PublicParams:
    params_id: bytes
    field_prime: int
    pubkey_name: Name
    suite: str = SUITE

    def serialize(self) -> bytes:
        w = wire.Writer()
        w.raw(self.params_id)
        w.raw(encode_field(self.field_prime))
        w.str(self.pubkey_name.format())
        w.str(self.suite)
        return w.getvalue()

    @classmethod
    def deserialize(cls, blob: bytes) -> "PublicParams":
        r = wire.Reader(blob)
        params_id = r.raw(32)
        prime = decode_field(r.raw(32))
        pubkey_name = parse_name(r.str())
        suite = r.str()
        r.expect_done()
        return cls(params_id=params_id, field_prime=prime,
                   pubkey_name=pubkey_name, suite=suite)


@dataclass
class MasterSecret:
    """Held only by the NOC; never serialized into any network blob."""

    seed: bytes

    def __repr__(self) -> str:
        return "MasterSecret(<redacted>)"


@dataclass(frozen=True)
class DecryptionKey:
    holder: Name
    attrs: AttributeSet
    secrets: Mapping[str, int]  # canonical attribute string -> field element
    epoch: int
    issued_at: int
    params_id: bytes

    def serialize(self) -> bytes:
        w = wire.Writer()
        w.raw(self.params_id)
        w.str(self.holder.format())
        w.u64(self.epoch)
        w.u64(self.issued_at)
        w.u32(len(self.secrets))
        for attr in sorted(self.secrets):
            w.str(attr)
            w.raw(encode_field(self.secrets[attr]))
        return w.getvalue()

    @classmethod
    def deserialize(cls, blob: bytes) -> "DecryptionKey":
        r = wire.Reader(blob)
        params_id = r.raw(32)
        holder = parse_name(r.str())
        epoch = r.u64()
        issued_at = r.u64()
        secrets = {}
        for _ in range(r.u32()):
            attr = r.str()
            secrets[attr] = decode_field(r.raw(32))
        r.expect_done()
        attrs = AttributeSet.parse_all(secrets.keys())
        return cls(holder=holder, attrs=attrs, secrets=secrets,
                   epoch=epoch, issued_at=issued_at, params_id=params_id)


@dataclass(frozen=True)
class CiphertextHeader:
    params_id: bytes
    policy_text: str
    tree: PolicyTree | None
    wrapped_shares: Mapping[int, tuple[bytes, bytes]]  # leaf index -> (nonce, ct)
    mode: str
    epoch: int
    widths: Mapping[str, int] = field(default_factory=dict)
    content_key_name: Name | None = None  # hybrid segments only


@dataclass(frozen=True)
class EncryptedObject:
    header: CiphertextHeader
    body: tuple[bytes, bytes]  # (nonce, ciphertext)

    def serialize(self) -> bytes:
        h = self.header
        w = wire.Writer()
        w.u8(0 if h.mode == MODE_DIRECT else 1)
        w.raw(h.params_id)
        w.u64(h.epoch)
        if h.mode == MODE_DIRECT:
            w.str(h.policy_text)
            w.u32(len(h.widths))
            for name in sorted(h.widths):
                w.str(name)
                w.u8(h.widths[name])
            w.u32(len(h.wrapped_shares))
            for index in sorted(h.wrapped_shares):
                nonce, ct = h.wrapped_shares[index]
                w.u32(index)
                w.raw(nonce)
                w.bytes(ct)
        else:
            w.str(h.content_key_name.format())
        nonce, ct = self.body
        w.raw(nonce)
        w.bytes(ct)
        return w.getvalue()

    @classmethod
    def deserialize(cls, blob: bytes) -> "EncryptedObject":
        r = wire.Reader(blob)
        mode = MODE_DIRECT if r.u8() == 0 else MODE_HYBRID
        params_id = r.raw(32)
        epoch = r.u64()
        if mode == MODE_DIRECT:
            policy_text = r.str()
            widths = {}
            for _ in range(r.u32()):
                name = r.str()
                widths[name] = r.u8()
            shares = {}
            for _ in range(r.u32()):
                index = r.u32()
                nonce = r.raw(NONCE_SIZE)
                shares[index] = (nonce, r.bytes())
            tree = compile_policy(parse_policy(policy_text), widths)
            leaf_indices = {leaf.index for leaf in tree_leaves(tree)}
            if set(shares) != leaf_indices:
                raise wire.WireError("wrapped shares do not match policy tree leaves")
            header = CiphertextHeader(params_id=params_id, policy_text=policy_text,
                                      tree=tree, wrapped_shares=shares, mode=mode,
                                      epoch=epoch, widths=widths)
        else:
            content_key_name = parse_name(r.str())
            header = CiphertextHeader(params_id=params_id, policy_text="",
                                      tree=None, wrapped_shares={}, mode=mode,
                                      epoch=epoch, content_key_name=content_key_name)
        nonce = r.raw(NONCE_SIZE)
        ct = r.bytes()
        r.expect_done()
        return cls(header=header, body=(nonce, ct))


# ---------------------------------------------------------------------------
# Engine operations
# ---------------------------------------------------------------------------

def setup(rng_seed: bytes, pubkey_base: Name | None = None) -> tuple[PublicParams, MasterSecret]:
    """Deterministic given rng_seed; distinct seeds give distinct params."""
    master_seed = derive("aabac.master", rng_seed)
    params_id = derive("aabac.params-id", master_seed)
    if pubkey_base is None:
        pubkey_base = parse_name("/genomics/pub_key")
    sequence = int.from_bytes(params_id[:8], "little")
    pubkey_name = pubkey_base.annotated("sequence", str(sequence))
    params = PublicParams(params_id=params_id, field_prime=FIELD_PRIME,
                          pubkey_name=pubkey_name)
    return params, MasterSecret(seed=master_seed)


def params_id_of(master: MasterSecret) -> bytes:
    return derive("aabac.params-id", master.seed)


def attribute_secret(master: MasterSecret, attr: str) -> int:
    """Per-attribute field element: PRF(master seed, canonical string)."""
    return prf_field(master.seed, b"attr:" + attr.encode("utf-8"))


def secret_oracle(master: MasterSecret) -> SecretOracle:
    """The encryption-side view of the master: attribute secrets only."""
    return lambda attr: attribute_secret(master, attr)


def keygen(master: MasterSecret, attrs: AttributeSet, epoch: int,
           holder: Name | None = None, issued_at: int = 0) -> DecryptionKey:
    if "epoch" in attrs:
        raise ValueError("'epoch' is injected by keygen and may not appear in attrs")
    full = materialize_all(attrs.union([Attribute.integer("epoch", epoch)]))
    secrets = {c: attribute_secret(master, c) for c in full.canonical_strings()}
    return DecryptionKey(
        holder=holder if holder is not None else parse_name("/user"),
        attrs=full, secrets=secrets, epoch=epoch, issued_at=issued_at,
        params_id=params_id_of(master))


def _lagrange_at_zero(points: list[tuple[int, int]]) -> int:
    acc = 0
    for i, (x_i, y_i) in enumerate(points):
        num, den = 1, 1
        for j, (x_j, _) in enumerate(points):
            if i == j:
                continue
            num = num * x_j % FIELD_PRIME
            den = den * (x_j - x_i) % FIELD_PRIME
        acc = (acc + y_i * num * pow(den, FIELD_PRIME - 2, FIELD_PRIME)) % FIELD_PRIME
    return acc


def share_over_tree(tree: PolicyTree, secret: int,
                    rng: DeterministicRng) -> dict[int, int]:
    """Assign the secret down the tree; returns leaf index -> share."""
    shares: dict[int, int] = {}

    def assign(node: PolicyTree, value: int) -> None:
        if isinstance(node, TreeLeaf):
            shares[node.index] = value
            return
        n = len(node.children)
        if node.threshold == 1:
            for child in node.children:
                assign(child, value)
        elif node.threshold == n:
            # f(0) = value, degree n-1; child i gets f(i), i = 1..n
            coeffs = [value] + [rng.field_element() for _ in range(n - 1)]
            for i, child in enumerate(node.children, start=1):
                y = 0
                for k, c in enumerate(coeffs):
                    y = (y + c * pow(i, k, FIELD_PRIME)) % FIELD_PRIME
                assign(child, y)
        else:
            raise UnsupportedThreshold(
                f"{node.threshold}-of-{n} nodes are not supported")

    assign(tree, secret)
    return shares


def reconstruct_root(tree: PolicyTree, leaf_values: Mapping[int, int]) -> int | None:
    """Recover the root value from available leaf shares, or None when the
    available set does not satisfy the tree."""
    if isinstance(tree, TreeLeaf):
        return leaf_values.get(tree.index)
    n = len(tree.children)
    if tree.threshold == 1:
        for child in tree.children:
            value = reconstruct_root(child, leaf_values)
            if value is not None:
                return value
        return None
    if tree.threshold == n:
        points = []
        for i, child in enumerate(tree.children, start=1):
            value = reconstruct_root(child, leaf_values)
            if value is None:
                return None
            points.append((i, value))
        return _lagrange_at_zero(points)
    raise UnsupportedThreshold(f"{tree.threshold}-of-{n} nodes are not supported")


def _wrap_key(attr_secret: int) -> bytes:
    return derive("aabac.wrap", encode_field(attr_secret))


def _body_key(content_secret: int) -> bytes:
    return derive("aabac.body", encode_field(content_secret))


def _body_aad(params_id: bytes, epoch: int, mode: str) -> bytes:
    return params_id + epoch.to_bytes(8, "little") + mode.encode()


def _build_header(params: PublicParams, oracle: SecretOracle, policy: PolicyAst,
                  epoch: int, mode: str, rng: DeterministicRng,
                  widths: Mapping[str, int] | None) -> tuple[CiphertextHeader, int]:
    """Compile the epoch-conjoined policy, share a fresh content secret,
    wrap every leaf share. Returns (header, content secret)."""
    full_policy = And((policy, LeafCmp("epoch", ">=", epoch)))
    widths = dict(widths or {})
    tree = compile_policy(full_policy, widths)
    content_secret = rng.field_element()
    shares = share_over_tree(tree, content_secret, rng)
    wrapped: dict[int, tuple[bytes, bytes]] = {}
    for leaf in tree_leaves(tree):
        nonce = rng.randbytes(NONCE_SIZE)
        ct = aead_seal(_wrap_key(oracle(leaf.attr)), nonce,
                       encode_field(shares[leaf.index]), aad=leaf.attr.encode())
        wrapped[leaf.index] = (nonce, ct)
    header = CiphertextHeader(params_id=params.params_id,
                              policy_text=print_policy(full_policy),
                              tree=tree, wrapped_shares=wrapped, mode=mode,
                              epoch=epoch, widths=widths)
    return header, content_secret


def encrypt(params: PublicParams, oracle: SecretOracle, policy: PolicyAst,
            payload: bytes, epoch: int, rng: DeterministicRng,
            widths: Mapping[str, int] | None = None) -> EncryptedObject:
    """Full ABE encryption of one payload (Direct mode). Hybrid mode is the
    wrap_content_key / seal_segment pair below; the publisher selects."""
    header, content_secret = _build_header(params, oracle, policy, epoch,
                                           MODE_DIRECT, rng, widths)
    nonce = rng.randbytes(NONCE_SIZE)
    ct = aead_seal(_body_key(content_secret), nonce, payload,
                   aad=_body_aad(params.params_id, epoch, MODE_DIRECT))
    return EncryptedObject(header=header, body=(nonce, ct))


def _unwrap_shares(key: DecryptionKey, header: CiphertextHeader) -> dict[int, int]:
    values: dict[int, int] = {}
    for leaf in tree_leaves(header.tree):
        secret = key.secrets.get(leaf.attr)
        if secret is None:
            continue
        nonce, ct = header.wrapped_shares[leaf.index]
        share = aead_open(_wrap_key(secret), nonce, ct, aad=leaf.attr.encode())
        values[leaf.index] = decode_field(share)
    return values


def decrypt(key: DecryptionKey, obj: EncryptedObject) -> bytes:
    """Reconstruct the content secret from the key's shares and open the
    body. Raises PolicyNotSatisfied when the attributes (including the
    epoch bits) cannot reconstruct the root."""
    header = obj.header
    if header.mode != MODE_DIRECT:
        raise ValueError("hybrid segment: unwrap the content key first")
    if key.params_id != header.params_id:
        raise ParamsMismatch("key and ciphertext use different params")
    values = _unwrap_shares(key, header)
    content_secret = reconstruct_root(header.tree, values)
    if content_secret is None:
        raise PolicyNotSatisfied(f"attributes do not satisfy: {header.policy_text}")
    nonce, ct = obj.body
    return aead_open(_body_key(content_secret), nonce, ct,
                     aad=_body_aad(header.params_id, header.epoch, header.mode))


# ---------------------------------------------------------------------------
# Hybrid mode: one ABE-wrapped content key protects many segments
# ---------------------------------------------------------------------------

def wrap_content_key(params: PublicParams, oracle: SecretOracle, policy: PolicyAst,
                     epoch: int, rng: DeterministicRng,
                     widths: Mapping[str, int] | None = None
                     ) -> tuple[int, EncryptedObject]:
    """Create the per-epoch key-wrapping object; returns (content secret,
    object). The body is a fixed marker so unwrapping is self-checking."""
    header, content_secret = _build_header(params, oracle, policy, epoch,
                                           MODE_DIRECT, rng, widths)
    nonce = rng.randbytes(NONCE_SIZE)
    ct = aead_seal(_body_key(content_secret), nonce, _CONTENT_KEY_MARKER,
                   aad=_body_aad(params.params_id, epoch, MODE_DIRECT))
    return content_secret, EncryptedObject(header=header, body=(nonce, ct))


def unwrap_content_key(key: DecryptionKey, obj: EncryptedObject) -> int:
    header = obj.header
    if key.params_id != header.params_id:
        raise ParamsMismatch("key and ciphertext use different params")
    values = _unwrap_shares(key, header)
    content_secret = reconstruct_root(header.tree, values)
    if content_secret is None:
        raise PolicyNotSatisfied(f"attributes do not satisfy: {header.policy_text}")
    nonce, ct = obj.body
    marker = aead_open(_body_key(content_secret), nonce, ct,
                       aad=_body_aad(header.params_id, header.epoch, header.mode))
    if marker != _CONTENT_KEY_MARKER:
        raise IntegrityError("content-key object carries a bad marker")
    return content_secret


def seal_segment(params_id: bytes, content_secret: int, payload: bytes,
                 epoch: int, content_key_name: Name,
                 rng: DeterministicRng) -> EncryptedObject:
    """Hybrid segment: symmetric-only body referencing the wrap object."""
    header = CiphertextHeader(params_id=params_id, policy_text="", tree=None,
                              wrapped_shares={}, mode=MODE_HYBRID, epoch=epoch,
                              content_key_name=content_key_name)
    nonce = rng.randbytes(NONCE_SIZE)
    ct = aead_seal(_body_key(content_secret), nonce, payload,
                   aad=_body_aad(params_id, epoch, MODE_HYBRID))
    return EncryptedObject(header=header, body=(nonce, ct))


def open_segment(content_secret: int, obj: EncryptedObject) -> bytes:
    nonce, ct = obj.body
    return aead_open(_body_key(content_secret), nonce, ct,
                     aad=_body_aad(obj.header.params_id, obj.header.epoch,
                                   obj.header.mode))
