"""
Network-layer packets.

DATA packets wrap one application Message; NetControl packets carry the
gradient and neighborhood control records. Control layouts:

    HELLO    round 2B, HC 1B, SA 2B
    INUSE    originator 2B, seq 2B
    INFO_REQ requester 2B
    INFO_RSP id 2B, hc 1B, energy 4B (millijoules, unsigned)
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Mapping, Optional

from protocol.messages import BROADCAST, CodecError, Message, MessageKind

NET_HEADER_BYTES = 11
MAC_HEADER_BYTES = 11
NO_GRADIENT = 0xFF


class PacketClass(str, Enum):
    ALERT = "alert"
    ROUTINE = "routine"
    NETCONTROL = "netcontrol"

    def __str__(self) -> str:
        return self.value


# MAC service order: lower rank goes first
CLASS_RANK = {PacketClass.ALERT: 0, PacketClass.NETCONTROL: 1, PacketClass.ROUTINE: 2}


class PacketKind(str, Enum):
    HELLO = "HELLO"
    INUSE = "INUSE"
    INFO_REQ = "INFO_REQ"
    INFO_RSP = "INFO_RSP"
    DATA = "DATA"

    def __str__(self) -> str:
        return self.value


class Scope(str, Enum):
    ROUTED = "routed"      # multi-hop product -> sink
    LOCAL = "local"        # single hop between products (GRE/RSI, control)
    DOWNLINK = "downlink"  # sink -> product, one hop at high power


CONTROL_LAYOUT: dict[PacketKind, tuple[tuple[str, str], ...]] = {
    PacketKind.HELLO: (("round", "H"), ("hc", "B"), ("sa", "H")),
    PacketKind.INUSE: (("originator", "H"), ("seq", "H")),
    PacketKind.INFO_REQ: (("requester", "H"),),
    PacketKind.INFO_RSP: (("id", "H"), ("hc", "B"), ("energy_mj", "I")),
}


def encode_control(kind: PacketKind, fields: Mapping[str, Any]) -> bytes:
    layout = CONTROL_LAYOUT[kind]
    try:
        return struct.pack(">" + "".join(c for _, c in layout), *(int(fields[name]) for name, _ in layout))
    except (KeyError, struct.error) as exc:
        raise CodecError(f"{kind}: bad control record {dict(fields)!r}: {exc}") from exc


def decode_control(kind: PacketKind, data: bytes) -> dict[str, int]:
    layout = CONTROL_LAYOUT[kind]
    try:
        values = struct.unpack(">" + "".join(c for _, c in layout), data)
    except struct.error as exc:
        raise CodecError(f"{kind}: truncated control record") from exc
    return {name: value for (name, _), value in zip(layout, values)}


def energy_to_mj(joules: float) -> int:
    if not math.isfinite(joules) or joules * 1000.0 >= 0xFFFFFFFF:
        return 0xFFFFFFFF
    return max(0, int(round(joules * 1000.0)))


def classify(message: Message) -> PacketClass:
    return PacketClass.ALERT if message.kind == MessageKind.ALE else PacketClass.ROUTINE


@dataclass(frozen=True)
class Packet:
    """One network-layer unit. `origin`/`seq` identify the end-to-end packet."""

    cls: PacketClass
    kind: PacketKind
    origin: int
    seq: int
    sender: int
    dest: int
    payload: Any = None
    scope: Scope = Scope.ROUTED
    hops: int = 0
    path_id: int = 0
    birth: float = 0.0
    ttl: int = 0
    synthetic: bool = False
    trail: tuple[int, ...] = ()

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.cls.value, self.origin, self.seq)

    @property
    def is_broadcast(self) -> bool:
        return self.dest == BROADCAST

    @property
    def message(self) -> Optional[Message]:
        return self.payload if self.kind == PacketKind.DATA else None

    def size_bytes(self) -> int:
        if self.kind == PacketKind.DATA:
            body = self.payload.size_bytes()
        else:
            body = struct.calcsize(">" + "".join(c for _, c in CONTROL_LAYOUT[self.kind]))
        return NET_HEADER_BYTES + body

    def frame_bytes(self) -> int:
        return MAC_HEADER_BYTES + self.size_bytes()

    def hop(self, sender: int, dest: int) -> "Packet":
        """Copy for the next link: new link endpoints, one more hop traversed."""
        return replace(self, sender=sender, dest=dest, hops=self.hops + 1, trail=self.trail + (sender,))


def data_packet(message: Message, seq: int, now: float, scope: Scope, ttl: int = 0, path_id: int = 0,
                synthetic: bool = False) -> Packet:
    """Wrap an application message; only routed uplink data is Alert/Routine class."""
    return Packet(
        cls=classify(message) if scope == Scope.ROUTED else PacketClass.NETCONTROL,
        kind=PacketKind.DATA,
        origin=message.src,
        seq=seq,
        sender=message.src,
        dest=message.dst,
        payload=message,
        scope=scope,
        path_id=path_id,
        birth=now,
        ttl=ttl,
        synthetic=synthetic,
    )


def control_packet(kind: PacketKind, sender: int, dest: int, fields: Mapping[str, Any], seq: int = 0,
                   now: float = 0.0) -> Packet:
    return Packet(
        cls=PacketClass.NETCONTROL,
        kind=kind,
        origin=sender,
        seq=seq,
        sender=sender,
        dest=dest,
        payload=dict(fields),
        scope=Scope.LOCAL,
        birth=now,
    )
