"""Hierarchical, human-readable names that drive every protocol step.

A name is an ordered list of components. A component is either plain text
or a key=value annotation. The canonical text form is '/' + components
joined by '/', with '/', '%' and '=' percent-encoded inside component
text, keys, and values, so the canonical form always splits and reparses
losslessly.

For compatibility with loosely written names such as
``/tntech/ledger/decryption-key/data:/genomics/data/sra1/...`` the parser
also accepts ':' after a small set of well-known annotation keys; the
annotation's value then extends over the following '/'-components until
the next annotation-looking component or the end of the name. Canonical
serialization always uses the '=' form.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import total_ordering
from typing import Iterable, Union

from .errors import MalformedName, MissingLocator

# Annotation keys the ':' compatibility rule applies to.
INLINE_ANNOTATION_KEYS = ("data", "Alice-pub-key", "user-pub-key", "local_ledger")

_ESCAPES = {"%": "%25", "/": "%2F", "=": "%3D"}
_HEX = "0123456789abcdefABCDEF"


def _encode(text: str) -> str:
    # '%' first so escape sequences are not double-escaped
    text = text.replace("%", "%25")
    text = text.replace("/", "%2F")
    text = text.replace("=", "%3D")
    return text


def _decode(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "%":
            if i + 3 > len(text):
                raise MalformedName(f"bad percent-encoding in {text!r}")
            hx = text[i + 1:i + 3]
            if hx[0] not in _HEX or hx[1] not in _HEX:
                raise MalformedName(f"bad percent-encoding in {text!r}")
            out.append(chr(int(hx, 16)))
            i += 3
        else:
            out.append(ch)
            i += 1
    return "".join(out)


@dataclass(frozen=True)
class Plain:
    text: str

    def format(self) -> str:
        enc = _encode(self.text)
        # a plain component must not reparse as an inline annotation
        for key in INLINE_ANNOTATION_KEYS:
            if enc.startswith(key + ":"):
                enc = key + "%3A" + enc[len(key) + 1:]
                break
        return enc


@dataclass(frozen=True)
class Annotation:
    key: str
    value: str

    def format(self) -> str:
        return _encode(self.key) + "=" + _encode(self.value)


Component = Union[Plain, Annotation]


@total_ordering
@dataclass(frozen=True)
class Name:
    components: tuple[Component, ...]

    def __post_init__(self):
        if not self.components:
            raise MalformedName("a name needs at least one component")

    def format(self) -> str:
        return "/" + "/".join(c.format() for c in self.components)

    def __str__(self) -> str:
        return self.format()

    def __len__(self) -> int:
        return len(self.components)

    def _sort_key(self):
        return tuple(c.format() for c in self.components)

    def __lt__(self, other: "Name") -> bool:
        return self._sort_key() < other._sort_key()

    def child(self, component: Component | str) -> "Name":
        if isinstance(component, str):
            component = Plain(component)
        return Name(self.components + (component,))

    def annotated(self, key: str, value: str) -> "Name":
        return Name(self.components + (Annotation(key, value),))

    def annotation(self, key: str) -> str | None:
        """Value of the first annotation with the given key, or None."""
        for c in self.components:
            if isinstance(c, Annotation) and c.key == key:
                return c.value
        return None

    def annotations(self) -> list[Annotation]:
        return [c for c in self.components if isinstance(c, Annotation)]

    def without_annotations(self) -> "Name":
        """Components up to (excluding) the first annotation."""
        plain = []
        for c in self.components:
            if isinstance(c, Annotation):
                break
            plain.append(c)
        return Name(tuple(plain))


@dataclass(frozen=True)
class KeyLocator:
    ledger_prefix: Name


def make_name(*parts: str) -> Name:
    """Convenience constructor from plain component texts."""
    return Name(tuple(Plain(p) for p in parts))


def _looks_like_annotation(raw: str) -> bool:
    if "=" in raw:
        return True
    return any(raw.startswith(k + ":") for k in INLINE_ANNOTATION_KEYS)


def parse_name(text: str) -> Name:
    if not text.startswith("/"):
        raise MalformedName(f"name must begin with '/': {text!r}")
    raw_parts = text[1:].split("/")
    if raw_parts == [""]:
        raise MalformedName("empty name")
    components: list[Component] = []
    i = 0
    while i < len(raw_parts):
        raw = raw_parts[i]
        if raw == "":
            raise MalformedName(f"empty component in {text!r}")
        if "=" in raw:
            key_raw, value_raw = raw.split("=", 1)
            key = _decode(key_raw)
            if not key:
                raise MalformedName(f"empty annotation key in {text!r}")
            components.append(Annotation(key, _decode(value_raw)))
            i += 1
            continue
        inline_key = next((k for k in INLINE_ANNOTATION_KEYS if raw.startswith(k + ":")), None)
        if inline_key is not None:
            # value spans following components until the next annotation-like one
            value = raw[len(inline_key) + 1:]
            i += 1
            while i < len(raw_parts) and raw_parts[i] != "" and not _looks_like_annotation(raw_parts[i]):
                value += "/" + raw_parts[i]
                i += 1
            components.append(Annotation(inline_key, _decode(value)))
            continue
        components.append(Plain(_decode(raw)))
        i += 1
    return Name(tuple(components))


def format_name(name: Name) -> str:
    return name.format()


def is_prefix_of(prefix: Name, name: Name) -> bool:
    """Component-exact leading-sublist test (never a string prefix)."""
    if len(prefix) > len(name):
        return False
    return name.components[:len(prefix)] == prefix.components


def build_published_data_name(base: Name, pubkey_name: Name, timestamp: int,
                              ledger_prefix: Name) -> Name:
    encrypted_by = f"{pubkey_name.format()}/timestamp={timestamp}"
    return (base
            .annotated("encrypted_by", encrypted_by)
            .annotated("local_ledger", ledger_prefix.format()))


def build_key_request_name(ledger_prefix: Name, data_name: Name, attrs,
                           user_pubkey_name: Name) -> Name:
    """Name of a decryption-key request Interest.

    attrs is an AttributeSet; each attribute becomes one annotation, in
    canonical sorted order, so two equal sets always build the same name.
    """
    name = ledger_prefix.child("decryption-key").annotated("data", data_name.format())
    for canonical in sorted(a.canonical() for a in attrs):
        key, value = canonical.split("=", 1)
        name = name.annotated(key, value)
    return name.annotated("user-pub-key", user_pubkey_name.format())


def extract_key_locator(name: Name) -> KeyLocator:
    value = name.annotation("local_ledger")
    if value is None:
        raise MissingLocator(f"no local_ledger annotation in {name}")
    return KeyLocator(ledger_prefix=parse_name(value))
