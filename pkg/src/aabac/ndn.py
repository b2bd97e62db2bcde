"""Deterministic in-process simulation of a name-based network.

Single event loop, virtual-millisecond clock, events totally ordered by
(time, sequence). Each node runs the standard forwarding pipeline:
content-store lookup (exact or prefix, freshness-checked),
pending-interest aggregation, local producer match, then longest-prefix
FIB forwarding. Data packets follow the reverse PIT path and populate
every content store on the way. A node that cannot forward an Interest
sends a no-route nack back along the requesting path.

Producers answer with a DataPacket, with None (the Interest then pends
until it times out), or with a Deferred they resolve later — which is how
the ledger and NOC services chain further network exchanges into one
request.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Callable, Optional

from . import wire
from .crypto import DeterministicRng, Identity, TrustStore
from .errors import (DuplicatePrefix, MissingSegment, NoRoute, Timeout,
                     UnknownSigner)
from .naming import Name, is_prefix_of, parse_name

MAX_SEGMENT_DEFAULT = 8800
DEFAULT_LIFETIME_MS = 4000
DEFAULT_FRESHNESS_MS = 2000
CS_CAPACITY_DEFAULT = 1024


@dataclass(frozen=True)
class Interest:
    name: Name
    nonce: bytes
    lifetime: int = DEFAULT_LIFETIME_MS

    def __post_init__(self):
        if self.lifetime <= 0:
            raise ValueError("interest lifetime must be > 0")


@dataclass(frozen=True)
class DataPacket:
    name: Name
    payload: bytes
    freshness: int
    signer: Name
    signature: bytes

    def __post_init__(self):
        if len(self.payload) > MAX_SEGMENT_DEFAULT:
            raise ValueError(
                f"payload of {len(self.payload)} bytes exceeds the "
                f"{MAX_SEGMENT_DEFAULT}-byte segment limit")


def _signable(name: Name, payload: bytes, freshness: int, signer: Name) -> bytes:
    w = wire.Writer()
    w.str(name.format())
    w.bytes(payload)
    w.u64(freshness)
    w.str(signer.format())
    return w.getvalue()


def sign_packet(name: Name, payload: bytes, freshness: int,
                identity: Identity) -> DataPacket:
    signature = identity.sign(_signable(name, payload, freshness, identity.name))
    return DataPacket(name=name, payload=payload, freshness=freshness,
                      signer=identity.name, signature=signature)


def verify_packet(packet: DataPacket, trust: TrustStore) -> bool:
    signer = trust.get(packet.signer)
    if signer is None:
        raise UnknownSigner(f"no trusted key for {packet.signer}")
    return signer.verify(
        _signable(packet.name, packet.payload, packet.freshness, packet.signer),
        packet.signature)


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------

def segment(name: Name, payload: bytes,
            max_segment: int = MAX_SEGMENT_DEFAULT) -> list[tuple[Name, bytes]]:
    """Slice payload into <= max_segment pieces named name + seg=k.
    An empty payload still yields one empty segment."""
    if max_segment < 1:
        raise ValueError("max_segment must be >= 1")
    slices = [payload[i:i + max_segment] for i in range(0, len(payload), max_segment)]
    if not slices:
        slices = [b""]
    return [(name.annotated("seg", str(k)), part) for k, part in enumerate(slices)]


def segment_index(name: Name) -> int | None:
    value = name.annotation("seg")
    return int(value) if value is not None and value.isdigit() else None


def reassemble(packets) -> bytes:
    """Inverse of segment. Accepts DataPackets or (Name, bytes) pairs with
    contiguous seg indices from 0."""
    by_index: dict[int, bytes] = {}
    for p in packets:
        name, payload = (p.name, p.payload) if isinstance(p, DataPacket) else p
        index = segment_index(name)
        if index is None:
            raise ValueError(f"no seg annotation in {name}")
        by_index[index] = payload
    for k in range(len(by_index)):
        if k not in by_index:
            raise MissingSegment(k)
    return b"".join(by_index[k] for k in range(len(by_index)))


# ---------------------------------------------------------------------------
# Forwarder state
# ---------------------------------------------------------------------------

# A face is where an Interest came from: an adjacent node or a local waiter.
Face = tuple[str, object]  # ("node", node_id) | ("local", waiter_id)


@dataclass
class PitEntry:
    name: Name
    faces: list[Face]
    expiry: int


class Deferred:
    """Producer reply that will be supplied later."""

    def __init__(self):
        self._callback: Optional[Callable[[DataPacket], None]] = None
        self._packet: Optional[DataPacket] = None

    def resolve(self, packet: DataPacket) -> None:
        if self._callback is not None:
            self._callback(packet)
        else:
            self._packet = packet

    def _attach(self, callback: Callable[[DataPacket], None]) -> None:
        self._callback = callback
        if self._packet is not None:
            callback(self._packet)


ProducerCallback = Callable[[Interest], "DataPacket | Deferred | None"]


class Node:
    def __init__(self, node_id: str, cs_capacity: int = CS_CAPACITY_DEFAULT):
        self.id = node_id
        self.fib: list[tuple[Name | None, tuple[str, ...]]] = []
        self.pit: dict[str, PitEntry] = {}
        self.cs: "OrderedDict[str, tuple[DataPacket, int]]" = OrderedDict()
        self.cs_capacity = cs_capacity
        self.producers: list[tuple[Name, ProducerCallback]] = []
        self.counters: dict[str, int] = {}

    def count(self, what: str) -> None:
        self.counters[what] = self.counters.get(what, 0) + 1

    def counter(self, what: str) -> int:
        return self.counters.get(what, 0)

    def _fib_match(self, name: Name) -> tuple[str, ...] | None:
        best: tuple[int, tuple[str, ...]] | None = None
        for prefix, hops in self.fib:
            score = -1 if prefix is None else (
                len(prefix) if is_prefix_of(prefix, name) else None)
            if score is None:
                continue
            if best is None or score > best[0]:
                best = (score, hops)
        return best[1] if best else None

    def _producer_match(self, name: Name) -> ProducerCallback | None:
        best: tuple[int, ProducerCallback] | None = None
        for prefix, cb in self.producers:
            if is_prefix_of(prefix, name) and (best is None or len(prefix) > best[0]):
                best = (len(prefix), cb)
        return best[1] if best else None

    def cs_insert(self, packet: DataPacket, now: int) -> None:
        key = packet.name.format()
        self.cs[key] = (packet, now)
        self.cs.move_to_end(key)
        while len(self.cs) > self.cs_capacity:
            self.cs.popitem(last=False)

    def cs_lookup(self, name: Name, now: int) -> DataPacket | None:
        exact = self.cs.get(name.format())
        if exact is not None:
            packet, inserted = exact
            if inserted + packet.freshness >= now:
                self.cs.move_to_end(name.format())
                return packet
            del self.cs[name.format()]
        candidates = []
        for key in list(self.cs):
            packet, inserted = self.cs[key]
            if inserted + packet.freshness < now:
                del self.cs[key]
                continue
            if is_prefix_of(name, packet.name):
                candidates.append((key, packet))
        if not candidates:
            return None
        key, packet = min(candidates)
        self.cs.move_to_end(key)
        return packet


class Topology:
    """Nodes, links, the event loop, and the trace."""

    def __init__(self, seed: bytes = b"\x00" * 32,
                 trust: TrustStore | None = None):
        self.nodes: dict[str, Node] = {}
        self.links: dict[str, dict[str, int]] = {}
        self.clock = 0
        self.trust = trust if trust is not None else TrustStore()
        self.rng = DeterministicRng(seed)
        self.trace: list[dict] = []
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0
        self._waiters: dict[int, tuple[Callable, Callable]] = {}
        self._next_waiter = 0
        self.tracing = True

    # -- construction --------------------------------------------------

    def add_node(self, node_id: str, cs_capacity: int = CS_CAPACITY_DEFAULT) -> Node:
        if node_id in self.nodes:
            raise ValueError(f"duplicate node {node_id!r}")
        node = Node(node_id, cs_capacity)
        self.nodes[node_id] = node
        self.links[node_id] = {}
        return node

    def add_link(self, a: str, b: str, latency_ms: int) -> None:
        if latency_ms < 0:
            raise ValueError("link latency must be >= 0")
        self.links[a][b] = latency_ms
        self.links[b][a] = latency_ms

    def add_route(self, node_id: str, prefix: Name | None, *next_hops: str) -> None:
        """FIB entry; prefix None is the default route."""
        for hop in next_hops:
            if hop not in self.links[node_id]:
                raise ValueError(f"no link {node_id} -> {hop}")
        self.nodes[node_id].fib.append((prefix, tuple(next_hops)))

    # -- event loop -----------------------------------------------------

    def schedule(self, delay_ms: int, fn: Callable[[], None]) -> None:
        heappush(self._heap, (self.clock + delay_ms, self._seq, fn))
        self._seq += 1

    def _step(self) -> bool:
        if not self._heap:
            return False
        time, _, fn = heappop(self._heap)
        self.clock = max(self.clock, time)
        fn()
        return True

    def run_until_idle(self) -> None:
        while self._step():
            pass

    def advance_clock(self, delay_ms: int) -> None:
        """Process everything due, then move the clock forward."""
        target = self.clock + delay_ms
        while self._heap and self._heap[0][0] <= target:
            self._step()
        self.clock = target

    def _trace(self, event: str, node: str, name: Name | None, **extra) -> None:
        if not self.tracing:
            return
        record = {"t": self.clock, "ev": event, "node": node}
        if name is not None:
            record["name"] = name.format()
        record.update(extra)
        self.trace.append(record)

    def trace_lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True, separators=(",", ":"))
                for r in self.trace]

    # -- forwarding -----------------------------------------------------

    def _deliver_to_face(self, node_id: str, face: Face, packet: DataPacket) -> None:
        kind, target = face
        if kind == "local":
            waiter = self._waiters.pop(target, None)
            if waiter is not None:
                self._trace("deliver", node_id, packet.name)
                waiter[0](packet)
        else:
            latency = self.links[node_id][target]
            self.schedule(latency, lambda: self._handle_data(target, packet, node_id))

    def _fail_face(self, node_id: str, face: Face, name: Name, exc: Exception) -> None:
        kind, target = face
        if kind == "local":
            waiter = self._waiters.pop(target, None)
            if waiter is not None:
                waiter[1](exc)
        else:
            latency = self.links[node_id][target]
            self.schedule(latency, lambda: self._handle_nack(target, name))

    def _handle_interest(self, node_id: str, interest: Interest, face: Face) -> None:
        node = self.nodes[node_id]
        node.count("interest")
        self._trace("interest", node_id, interest.name)

        cached = node.cs_lookup(interest.name, self.clock)
        if cached is not None:
            _, inserted = node.cs[cached.name.format()]
            if inserted + cached.freshness < self.clock:
                raise AssertionError("content store returned a stale packet")
            node.count("cs_hit")
            self._trace("cs_hit", node_id, cached.name)
            self._deliver_to_face(node_id, face, cached)
            return

        key = interest.name.format()
        entry = node.pit.get(key)
        if entry is not None and entry.expiry >= self.clock:
            if face not in entry.faces:
                entry.faces.append(face)
            entry.expiry = max(entry.expiry, self.clock + interest.lifetime)
            node.count("pit_agg")
            self._trace("pit_agg", node_id, interest.name)
            return

        producer = node._producer_match(interest.name)
        if producer is not None:
            node.pit[key] = PitEntry(name=interest.name, faces=[face],
                                     expiry=self.clock + interest.lifetime)
            node.count("produce")
            result = producer(interest)
            if isinstance(result, DataPacket):
                self.schedule(0, lambda: self._handle_data(node_id, result, None))
            elif isinstance(result, Deferred):
                result._attach(lambda packet: self.schedule(
                    0, lambda: self._handle_data(node_id, packet, None)))
            # None: leave the entry pending; requester times out
            return

        hops = node._fib_match(interest.name)
        if hops is not None:
            node.pit[key] = PitEntry(name=interest.name, faces=[face],
                                     expiry=self.clock + interest.lifetime)
            hop = hops[0]
            self._trace("forward", node_id, interest.name, to=hop)
            latency = self.links[node_id][hop]
            self.schedule(latency, lambda: self._handle_interest(
                hop, interest, ("node", node_id)))
            return

        node.count("no_route")
        self._trace("no_route", node_id, interest.name)
        self._fail_face(node_id, face, interest.name,
                        NoRoute(f"no route for {interest.name} at {node_id}"))

    def _handle_nack(self, node_id: str, name: Name) -> None:
        node = self.nodes[node_id]
        entry = node.pit.pop(name.format(), None)
        if entry is None:
            return
        self._trace("nack", node_id, name)
        for face in entry.faces:
            self._fail_face(node_id, face, name,
                            NoRoute(f"no route for {name}"))

    def _handle_data(self, node_id: str, packet: DataPacket,
                     from_node: str | None) -> None:
        node = self.nodes[node_id]
        node.count("data")
        self._trace("data", node_id, packet.name)
        matched = [key for key, entry in node.pit.items()
                   if is_prefix_of(entry.name, packet.name)]
        if not matched:
            return  # unsolicited
        node.cs_insert(packet, self.clock)
        for key in matched:
            entry = node.pit.pop(key)
            if entry.expiry < self.clock:
                continue
            for face in entry.faces:
                self._deliver_to_face(node_id, face, packet)

    # -- client API -----------------------------------------------------

    def make_interest(self, name: Name, lifetime: int = DEFAULT_LIFETIME_MS) -> Interest:
        return Interest(name=name, nonce=self.rng.randbytes(8), lifetime=lifetime)

    def send_interest(self, from_id: str, interest: Interest,
                      on_data: Callable[[DataPacket], None],
                      on_error: Callable[[Exception], None]) -> None:
        """Asynchronous fetch: callbacks fire from the event loop."""
        waiter_id = self._next_waiter
        self._next_waiter += 1
        self._waiters[waiter_id] = (on_data, on_error)
        self.schedule(0, lambda: self._handle_interest(
            from_id, interest, ("local", waiter_id)))

        def check_timeout():
            waiter = self._waiters.pop(waiter_id, None)
            if waiter is not None:
                self._trace("timeout", from_id, interest.name)
                waiter[1](Timeout(f"no data for {interest.name} "
                                  f"within {interest.lifetime}ms"))

        self.schedule(interest.lifetime, check_timeout)


def register_prefix(topology: Topology, node_id: str, prefix: Name,
                    callback: ProducerCallback) -> None:
    node = topology.nodes[node_id]
    if any(p.format() == prefix.format() for p, _ in node.producers):
        raise DuplicatePrefix(f"{prefix} already registered on {node_id}")
    node.producers.append((prefix, callback))


def express_interest(topology: Topology, from_id: str,
                     interest: Interest) -> DataPacket:
    """Synchronous fetch: drives the event loop until the Interest is
    satisfied, nacked, or timed out."""
    slot: dict = {}
    topology.send_interest(from_id, interest,
                           lambda packet: slot.__setitem__("data", packet),
                           lambda exc: slot.__setitem__("error", exc))
    while not slot and topology._step():
        pass
    if "data" in slot:
        return slot["data"]
    if "error" in slot:
        raise slot["error"]
    raise Timeout(f"event loop drained without satisfying {interest.name}")


def fetch(topology: Topology, from_id: str, name: Name,
          lifetime: int = DEFAULT_LIFETIME_MS) -> DataPacket:
    return express_interest(topology, from_id, topology.make_interest(name, lifetime))


# ---------------------------------------------------------------------------
# Topology description files
# ---------------------------------------------------------------------------

def load_topology(description: dict, seed: bytes = b"\x00" * 32) -> Topology:
    """Build a topology from the JSON description format:
    {"nodes": [{"id", "cs_capacity"?}], "links": [{"a","b","latency_ms"}],
     "registrations": [{"node","prefix","next_hops"}]}.

    Registrations are FIB routes; producers attach in code."""
    topo = Topology(seed=seed)
    for spec in description.get("nodes", []):
        topo.add_node(spec["id"], spec.get("cs_capacity", CS_CAPACITY_DEFAULT))
    for spec in description.get("links", []):
        topo.add_link(spec["a"], spec["b"], spec["latency_ms"])
    for spec in description.get("registrations", []):
        prefix = parse_name(spec["prefix"]) if spec.get("prefix") else None
        topo.add_route(spec["node"], prefix, *spec["next_hops"])
    return topo
