"""Store-carry-forward policies.

Vehicles run one of four policies (Direct Delivery, First Contact, Epidemic,
Spray and Wait). Sensors always hand their readings to the first vehicle in
range, and PoPs push everything they receive to the server over a wired hop.
Policies are pure decisions over node state; the engine applies them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union


class Role(enum.IntEnum):
    SERVER = 0
    POP = 1
    SENSOR = 2
    BUS = 3
    CAR = 4


VEHICLES = (Role.BUS, Role.CAR)
EXITS = (Role.POP, Role.SERVER)


class AccountingError(RuntimeError):
    pass


@dataclass(frozen=True)
class DirectDelivery:
    name = "direct_delivery"


@dataclass(frozen=True)
class FirstContact:
    name = "first_contact"


@dataclass(frozen=True)
class Epidemic:
    name = "epidemic"


@dataclass(frozen=True)
class SprayAndWait:
    mode: str = "binary"
    copies: int = 6
    name = "spray_and_wait"

    def __post_init__(self):
        if self.mode not in ("binary", "standard"):
            raise ValueError(f"spray and wait mode must be binary or standard, got {self.mode!r}")
        if self.copies < 1:
            raise ValueError("spray and wait needs L >= 1")


RoutingPolicy = Union[DirectDelivery, FirstContact, Epidemic, SprayAndWait]

POLICY_NAMES = ("direct_delivery", "first_contact", "epidemic", "spray_and_wait")


def parse_policy(text: str) -> RoutingPolicy:
    """``direct_delivery``, ``first_contact``, ``epidemic`` or
    ``spray_and_wait[:mode[:L]]``."""
    name, *rest = text.strip().lower().split(":")
    if name == "direct_delivery" and not rest:
        return DirectDelivery()
    if name == "first_contact" and not rest:
        return FirstContact()
    if name == "epidemic" and not rest:
        return Epidemic()
    if name == "spray_and_wait" and len(rest) <= 2:
        mode = rest[0] if rest else "binary"
        copies = int(rest[1]) if len(rest) > 1 else 6
        return SprayAndWait(mode, copies)
    raise ValueError(f"unknown routing policy {text!r}")


def policy_label(policy: RoutingPolicy) -> str:
    if isinstance(policy, SprayAndWait):
        return f"spray_and_wait:{policy.mode}:{policy.copies}"
    return policy.name


@dataclass(frozen=True)
class Message:
    id: int
    origin: int
    destination: int
    created_at: float
    ttl: float
    size: int

    def __post_init__(self):
        if self.size <= 0 or self.ttl <= 0:
            raise ValueError("message size and ttl must be positive")

    @property
    def expires_at(self) -> float:
        return self.created_at + self.ttl

    @property
    def sort_key(self) -> tuple[float, int]:
        return (self.created_at, self.id)


@dataclass
class BufferEntry:
    message: Message
    copies: int
    received_from: int
    received_link: int = -1  # link id of the contact the copy arrived on
    hops: tuple[int, ...] = ()  # nodes that have carried this copy, origin first


class Buffer:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self.entries: dict[int, BufferEntry] = {}
        self.used = 0

    def __contains__(self, mid: int) -> bool:
        return mid in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def free(self) -> int:
        return self.capacity - self.used

    def add(self, entry: BufferEntry) -> None:
        mid = entry.message.id
        if mid in self.entries:
            raise AccountingError(f"message {mid} already buffered")
        if entry.message.size > self.free():
            raise AccountingError(f"message {mid} does not fit")
        self.entries[mid] = entry
        self.used += entry.message.size

    def remove(self, mid: int) -> BufferEntry:
        entry = self.entries.pop(mid)
        self.used -= entry.message.size
        return entry


@dataclass(eq=False)
class Node:
    id: int
    role: Role
    buffer: Buffer
    interfaces: tuple = ()
    policy: RoutingPolicy | None = None
    # the server's delivered ids; a PoP advertises them in its summary vector
    delivered: set = field(default_factory=set)
    links: dict = field(default_factory=dict)  # peer id -> ContactLink

    @property
    def is_exit(self) -> bool:
        return self.role in EXITS

    def has(self, mid: int) -> bool:
        """Summary-vector membership."""
        if mid in self.buffer.entries:
            return True
        return self.role in EXITS and mid in self.delivered


def offer_copies(me: Node, peer: Node, entry: BufferEntry, link_id: int = -1) -> int | None:
    """Copies ``me`` would hand to ``peer`` for ``entry``, or None."""
    role = me.role
    if role == Role.SENSOR:
        return 1 if peer.role in VEHICLES else None
    if role not in VEHICLES:
        return None
    if peer.role == Role.SENSOR:
        return None
    pol = me.policy
    mid = entry.message.id
    if isinstance(pol, DirectDelivery):
        return entry.copies if peer.is_exit else None
    if isinstance(pol, FirstContact):
        if peer.is_exit:
            return entry.copies
        if entry.received_from == peer.id and entry.received_link == link_id:
            return None
        return entry.copies
    if isinstance(pol, Epidemic):
        return None if peer.has(mid) else 1
    if isinstance(pol, SprayAndWait):
        if peer.is_exit:
            return entry.copies
        if entry.copies < 2 or peer.has(mid):
            return None
        if pol.mode == "standard":
            return 1
        return math.ceil(entry.copies / 2)
    raise TypeError(f"unknown policy {pol!r}")


def offers_nothing(me: Node, peer: Node) -> bool:
    """True when ``offer_copies(me, peer, ...)`` is None for every entry."""
    if me.role == Role.SENSOR:
        return peer.role not in VEHICLES
    return me.role not in VEHICLES or peer.role == Role.SENSOR


def respects_summary(me: Node, peer: Node) -> bool:
    """True when ``me`` never offers ``peer`` a message ``peer.has``."""
    if me.role not in VEHICLES:
        return False
    pol = me.policy
    return isinstance(pol, Epidemic) or (isinstance(pol, SprayAndWait) and not peer.is_exit)


def offers_on_contact(me: Node, peer: Node, link_id: int = -1) -> list[tuple[int, int]]:
    """Ordered (message id, copies) offers from ``me`` to ``peer``."""
    out = []
    for entry in sorted(me.buffer.entries.values(), key=lambda e: e.message.sort_key):
        c = offer_copies(me, peer, entry, link_id)
        if c is not None:
            out.append((entry.message.id, c))
    return out


def sensor_policy(sensor: Node, peer: Node) -> list[tuple[int, int]]:
    if sensor.role != Role.SENSOR:
        raise ValueError("sensor_policy applies to sensors only")
    return offers_on_contact(sensor, peer)


def pop_policy(pop: Node) -> list[BufferEntry]:
    """Entries a PoP forwards to the server right now (all of them)."""
    return sorted(pop.buffer.entries.values(), key=lambda e: e.message.sort_key)


def accept_incoming(receiver: Node, message: Message, now: float, hops: tuple[int, ...] = (),
                    reserved: int = 0) -> str | None:
    """None to accept, otherwise the rejection reason.

    ``reserved`` is buffer space already promised to queued incoming jobs.
    First Contact receivers also refuse a copy that has passed through them
    before, which keeps a single copy from cycling around a cluster.
    """
    if receiver.role == Role.SENSOR:
        return "refused"
    mid = message.id
    if receiver.role == Role.SERVER:
        if mid in receiver.delivered:
            return "duplicate"
    elif mid in receiver.buffer.entries:
        return "duplicate"
    if now >= message.expires_at:
        return "ttl"
    if receiver.role != Role.SERVER and message.size > receiver.buffer.free() - reserved:
        return "buffer"
    if isinstance(receiver.policy, FirstContact) and receiver.role in VEHICLES and receiver.id in hops:
        return "looped"
    return None


def init_custody_from_sensor(vehicle: Node, message: Message, policy: RoutingPolicy | None,
                             sensor: int, link_id: int = -1) -> BufferEntry:
    copies = policy.copies if isinstance(policy, SprayAndWait) else 1
    return BufferEntry(message, copies, sensor, link_id, (sensor, vehicle.id))


def on_transfer_complete(sender: Node, mid: int, copies_sent: int, peer: Node) -> None:
    """Update the sender's custody after ``peer`` accepted the copy."""
    entry = sender.buffer.entries[mid]
    budget = entry.copies - (0 if peer.is_exit else 1)
    pol = sender.policy
    if sender.role == Role.SENSOR or sender.role == Role.POP:
        sender.buffer.remove(mid)
        return
    if isinstance(pol, Epidemic):
        return
    if isinstance(pol, (DirectDelivery, FirstContact)):
        sender.buffer.remove(mid)
        return
    if isinstance(pol, SprayAndWait):
        if copies_sent > budget:
            raise AccountingError(f"message {mid}: sent {copies_sent} of {entry.copies} copies to node {peer.id}")
        if peer.is_exit:
            sender.buffer.remove(mid)
        else:
            entry.copies -= copies_sent
        return
    raise TypeError(f"unknown policy {pol!r}")


def receiver_entry(receiver: Node, sender: Node, entry: BufferEntry, copies: int, link_id: int) -> BufferEntry:
    if sender.role == Role.SENSOR:
        return init_custody_from_sensor(receiver, entry.message, receiver.policy, sender.id, link_id)
    return BufferEntry(entry.message, copies, sender.id, link_id, entry.hops + (receiver.id,))


def keeps_custody(policy: RoutingPolicy | None, role: Role) -> bool:
    """True when sending a copy leaves the sender's copy untouched, so the
    same message may be in flight on several links at once."""
    return role in VEHICLES and isinstance(policy, Epidemic)
