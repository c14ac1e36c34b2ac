"""
Application-layer messages exchanged between active products and the sink.

Wire layout (simulated): kind tag (1 B), source (2 B), destination
(2 B, 0xFFFF = broadcast), sequence (2 B), then a kind-specific payload of
at most 100 bytes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

BROADCAST = 0xFFFF
SINK_ID = 0
MAX_PAYLOAD = 100

_HEADER = struct.Struct(">BHHH")


class CodecError(Exception):
    """A message cannot be encoded or decoded."""


class MessageKind(str, Enum):
    CTR = "CTR"
    ACKCTR = "ACKCTR"
    NCF0 = "NCF0"
    NCF1 = "NCF1"
    NCF2 = "NCF2"
    CMD1 = "CMD1"
    CMD2 = "CMD2"
    CMD3 = "CMD3"
    CMD4 = "CMD4"
    CMD5 = "CMD5"
    CFG = "CFG"
    SER = "SER"
    INA = "INA"
    GRE = "GRE"
    RSI = "RSI"
    ALE = "ALE"
    ACKALE = "ACKALE"

    def __str__(self) -> str:
        return self.value


KIND_TAGS: dict[MessageKind, int] = {kind: tag for tag, kind in enumerate(MessageKind, start=1)}
_TAG_KINDS = {tag: kind for kind, tag in KIND_TAGS.items()}

# Rule record shared by CMD3 and SER: v_min, v_max, delta_v, t_cr, n_c, d_min, delta_d
_RULES = (("v_min", "f"), ("v_max", "f"), ("delta_v", "f"), ("t_cr", "f"),
          ("n_c", "H"), ("d_min", "f"), ("delta_d", "f"))

# kind -> (fixed numeric fields, carries a trailing symbol)
PAYLOAD_LAYOUT: dict[MessageKind, tuple[tuple[tuple[str, str], ...], bool]] = {
    MessageKind.CTR: ((), False),
    MessageKind.ACKCTR: ((), False),
    MessageKind.NCF0: ((), False),
    MessageKind.NCF1: ((), False),
    MessageKind.NCF2: ((), False),
    MessageKind.CMD1: ((), True),
    MessageKind.CMD2: ((), False),
    MessageKind.CMD3: (_RULES, False),
    MessageKind.CMD4: ((), False),
    MessageKind.CMD5: ((), False),
    MessageKind.CFG: ((("has_symbols", "?"), ("has_rules", "?"),
                       ("gre_period", "f"), ("sample_period", "f")), True),
    MessageKind.SER: (_RULES, False),
    MessageKind.INA: ((("value", "f"), ("level", "B")), False),
    MessageKind.GRE: ((("level", "B"),), True),
    MessageKind.RSI: ((("rssi", "f"), ("level", "B")), True),
    MessageKind.ALE: ((("alert_id", "H"), ("level", "B"), ("cause", "B"),
                       ("value", "f"), ("distance", "f"), ("neighbor", "H")), False),
    MessageKind.ACKALE: ((("alert_id", "H"),), False),
}

ALERT_CAUSES = ("static", "dynamic", "community")


@dataclass(frozen=True)
class Message:
    """One application message; payload keys follow PAYLOAD_LAYOUT."""

    kind: MessageKind
    src: int
    dst: int
    seq: int = 0
    payload: Mapping[str, Any] = field(default_factory=dict)

    @property
    def is_broadcast(self) -> bool:
        return self.dst == BROADCAST

    def size_bytes(self) -> int:
        return _HEADER.size + len(encode_payload(self.kind, self.payload))


def _payload_struct(kind: MessageKind) -> struct.Struct:
    fields, _ = PAYLOAD_LAYOUT[kind]
    return struct.Struct(">" + "".join(code for _, code in fields))


def encode_payload(kind: MessageKind, payload: Mapping[str, Any]) -> bytes:
    fields, has_symbol = PAYLOAD_LAYOUT[kind]
    try:
        values = [payload[name] for name, _ in fields]
        body = _payload_struct(kind).pack(*[int(v) if code in "BH" else v for v, (_, code) in zip(values, fields)])
    except (KeyError, struct.error) as exc:
        raise CodecError(f"{kind}: bad payload {dict(payload)!r}: {exc}") from exc
    if has_symbol:
        symbol = str(payload.get("symbol", "")).encode("utf-8")
        if len(symbol) > 255:
            raise CodecError(f"{kind}: symbol too long")
        body += bytes([len(symbol)]) + symbol
    if len(body) > MAX_PAYLOAD:
        raise CodecError(f"{kind}: payload of {len(body)} bytes exceeds {MAX_PAYLOAD}")
    return body


def encode(message: Message) -> bytes:
    header = _HEADER.pack(KIND_TAGS[message.kind], message.src & 0xFFFF,
                          message.dst & 0xFFFF, message.seq & 0xFFFF)
    return header + encode_payload(message.kind, message.payload)


def decode(data: bytes) -> Message:
    if len(data) < _HEADER.size:
        raise CodecError(f"frame of {len(data)} bytes is shorter than the header")
    tag, src, dst, seq = _HEADER.unpack_from(data)
    if tag not in _TAG_KINDS:
        raise CodecError(f"unknown kind tag {tag}")
    kind = _TAG_KINDS[tag]
    fields, has_symbol = PAYLOAD_LAYOUT[kind]
    body = _payload_struct(kind)
    offset = _HEADER.size
    try:
        values = body.unpack_from(data, offset)
    except struct.error as exc:
        raise CodecError(f"{kind}: truncated payload") from exc
    payload: dict[str, Any] = {name: value for (name, _), value in zip(fields, values)}
    offset += body.size
    if has_symbol:
        if offset >= len(data):
            raise CodecError(f"{kind}: missing symbol")
        length = data[offset]
        raw = data[offset + 1: offset + 1 + length]
        if len(raw) < length:
            raise CodecError(f"{kind}: symbol declares {length} bytes, {len(raw)} present")
        try:
            payload["symbol"] = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError(f"{kind}: symbol is not valid UTF-8") from exc
    return Message(kind=kind, src=src, dst=dst, seq=seq, payload=payload)


def rules_payload(static_cfg, dynamic_cfg, community_cfg) -> dict[str, Any]:
    """Rule record carried by CMD3 and SER."""
    return {
        "v_min": static_cfg.v_min,
        "v_max": static_cfg.v_max,
        "delta_v": static_cfg.delta_v,
        "t_cr": dynamic_cfg.t_cr,
        "n_c": dynamic_cfg.n_c,
        "d_min": community_cfg.d_min,
        "delta_d": community_cfg.delta_d,
    }
