"""
Control-center (sink) state machine.

The sink registers products, fills the configuration gaps announced by
NCF0/1/2, acknowledges alerts and serves operator queries. Downlink
messages reach any product in one hop; the simulator sends them on the
sink's high-power radio profile.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field

from protocol.events import MessageReceived, OperatorCommand, SinkEvent
from protocol.messages import SINK_ID, Message, MessageKind, rules_payload
from protocol.rules import (
    CommunityRuleConfig,
    DynamicRuleConfig,
    SecurityLevel,
    StaticRuleConfig,
)

logger = logging.getLogger(__name__)

QUERY_COMMANDS: dict[str, tuple[MessageKind, MessageKind]] = {
    "query-config": (MessageKind.CMD2, MessageKind.CFG),
    "query-rules": (MessageKind.CMD4, MessageKind.SER),
    "query-ambient": (MessageKind.CMD5, MessageKind.INA),
}

DEDUP_WINDOW = 64


class ProductProvision(BaseModel):
    """What the control center installs on a product that lacks it."""

    model_config = ConfigDict(frozen=True)

    symbol: str = ""
    static_cfg: StaticRuleConfig = Field(default_factory=StaticRuleConfig)
    dynamic_cfg: DynamicRuleConfig = Field(default_factory=DynamicRuleConfig)
    community_cfg: CommunityRuleConfig = Field(default_factory=CommunityRuleConfig)


@dataclass(frozen=True)
class SinkRecord:
    registered: bool = False
    configured: bool = False
    level: SecurityLevel = SecurityLevel.G


@dataclass(frozen=True)
class AlertRecord:
    time: float
    product: int
    payload: Mapping[str, Any]


@dataclass(frozen=True)
class PendingQuery:
    target: int
    expects: MessageKind
    issued: float


@dataclass(frozen=True)
class QueryResponse:
    time: float
    product: int
    kind: MessageKind
    payload: Mapping[str, Any]
    latency: Optional[float]


@dataclass(frozen=True)
class SinkState:
    catalog: Mapping[int, ProductProvision] = field(default_factory=dict)
    registry: Mapping[int, SinkRecord] = field(default_factory=dict)
    alert_log: tuple[AlertRecord, ...] = ()
    pending_queries: tuple[PendingQuery, ...] = ()
    responses: tuple[QueryResponse, ...] = ()
    # per product, the most recent DEDUP_WINDOW ALE seqs and alert ids
    acked: Mapping[int, tuple[int, ...]] = field(default_factory=dict)
    seen_alerts: Mapping[int, tuple[int, ...]] = field(default_factory=dict)
    next_seq: int = 1
    default_provision: ProductProvision = field(default_factory=ProductProvision)

    def provision(self, product: int) -> ProductProvision:
        return self.catalog.get(product, self.default_provision)


def _remember(window: Mapping[int, tuple[int, ...]], product: int, value: int) -> dict[int, tuple[int, ...]]:
    updated = dict(window)
    updated[product] = (window.get(product, ()) + (value,))[-DEDUP_WINDOW:]
    return updated


def _emit(state: SinkState, kind: MessageKind, dst: int, payload: Optional[Mapping[str, Any]] = None):
    message = Message(kind=kind, src=SINK_ID, dst=dst, seq=state.next_seq & 0xFFFF, payload=dict(payload or {}))
    return replace(state, next_seq=state.next_seq + 1), message


def _update_record(state: SinkState, product: int, **changes) -> SinkState:
    registry = dict(state.registry)
    registry[product] = replace(registry.get(product, SinkRecord()), **changes)
    return replace(state, registry=registry)


def _cmd1(state: SinkState, product: int):
    return _emit(state, MessageKind.CMD1, product, {"symbol": state.provision(product).symbol})


def _cmd3(state: SinkState, product: int):
    p = state.provision(product)
    return _emit(state, MessageKind.CMD3, product, rules_payload(p.static_cfg, p.dynamic_cfg, p.community_cfg))


def _on_message(state: SinkState, message: Message, now: float):
    kind, src = message.kind, message.src
    out: list[Message] = []

    if kind == MessageKind.CTR:
        # duplicate CTRs are re-acknowledged
        state = _update_record(state, src, registered=True)
        state, ack = _emit(state, MessageKind.ACKCTR, src)
        return state, [ack]

    if kind in (MessageKind.NCF0, MessageKind.NCF1, MessageKind.NCF2):
        if kind in (MessageKind.NCF0, MessageKind.NCF2):
            state, cmd = _cmd1(state, src)
            out.append(cmd)
        if kind in (MessageKind.NCF0, MessageKind.NCF1):
            state, cmd = _cmd3(state, src)
            out.append(cmd)
        state = _update_record(state, src, registered=True, configured=True)
        return state, out

    if kind == MessageKind.ALE:
        if message.seq in state.acked.get(src, ()):
            return state, []
        state = replace(state, acked=_remember(state.acked, src, message.seq))
        alert_id = int(message.payload.get("alert_id", message.seq))
        if alert_id not in state.seen_alerts.get(src, ()):
            level = SecurityLevel(int(message.payload.get("level", SecurityLevel.B)))
            state = replace(
                state,
                seen_alerts=_remember(state.seen_alerts, src, alert_id),
                alert_log=state.alert_log + (AlertRecord(now, src, dict(message.payload)),),
            )
            state = _update_record(state, src, level=level)
        state, ack = _emit(state, MessageKind.ACKALE, src, {"alert_id": alert_id})
        return state, [ack]

    if kind in (MessageKind.CFG, MessageKind.SER, MessageKind.INA):
        match = next((q for q in state.pending_queries if q.target == src and q.expects == kind), None)
        latency = None if match is None else now - match.issued
        pending = state.pending_queries
        if match is not None:
            pending = tuple(q for q in pending if q is not match)
        else:
            logger.debug("sink: unsolicited %s from %d", kind, src)
        response = QueryResponse(now, src, kind, dict(message.payload), latency)
        state = replace(state, pending_queries=pending, responses=state.responses + (response,))
        if kind == MessageKind.INA and "level" in message.payload:
            state = _update_record(state, src, level=SecurityLevel(int(message.payload["level"])))
        return state, []

    logger.warning("protocol violation: sink got %s from %d", kind, src)
    return state, []


def _on_command(state: SinkState, command: OperatorCommand, now: float):
    if command.action == "reset":
        state, cmd = _cmd3(state, command.target)
        return state, [cmd]
    request, expects = QUERY_COMMANDS[command.action]
    state, cmd = _emit(state, request, command.target)
    state = replace(state, pending_queries=state.pending_queries + (PendingQuery(command.target, expects, now),))
    return state, [cmd]


def sink_step(state: SinkState, event: SinkEvent, now: float) -> tuple[SinkState, list[Message]]:
    """Deterministic transition of the control center."""
    if isinstance(event, MessageReceived):
        return _on_message(state, event.message, now)
    if isinstance(event, OperatorCommand):
        return _on_command(state, event, now)
    raise TypeError(f"unsupported sink event {event!r}")
