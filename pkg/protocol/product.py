"""
Active-product state machine.

product_step(state, event, now) -> (state, outgoing messages) covers the
four protocol parts: registration (CTR/ACKCTR), configuration (NCF/CMD1/
CMD3), internal supervising (GRE/RSI, CMD2/4/5 -> CFG/SER/INA) and alert
announcement (ALE/ACKALE). Timers live in the state as due times; the
driver fires TimerFired events and stale firings are ignored.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from protocol.events import MessageReceived, ProductEvent, SensorSample, Timer, TimerFired
from protocol.messages import ALERT_CAUSES, BROADCAST, SINK_ID, Message, MessageKind, rules_payload
from protocol.ranging import rssi_to_distance
from protocol.rules import (
    CommunityRuleConfig,
    DynamicRuleConfig,
    DynamicRuleState,
    RuleError,
    SecurityLevel,
    StaticRuleConfig,
    combine_global,
    eval_community,
    eval_static,
    reset_dynamic,
    update_dynamic,
)
from simulation.channel import ChannelModel

logger = logging.getLogger(__name__)

CTR_RETRY_PERIOD = 2.0
ALE_RETRY_PERIOD = 0.5
ALE_MAX_ATTEMPTS = 10
COMMUNITY_STALE_PERIODS = 3
_EPS = 1e-9


class Phase(str, Enum):
    UNREGISTERED = "unregistered"
    AWAITING_ACK = "awaiting_ack"
    AWAITING_CONFIG = "awaiting_config"
    SUPERVISING = "supervising"


class ProductConfig(BaseModel):
    """What a product knows about itself; flags tell which parts are valid."""

    model_config = ConfigDict(frozen=True)

    product_id: int
    symbol: str = ""
    has_symbols: bool = False
    has_rules: bool = False
    static_cfg: StaticRuleConfig = Field(default_factory=StaticRuleConfig)
    dynamic_cfg: DynamicRuleConfig = Field(default_factory=DynamicRuleConfig)
    community_cfg: CommunityRuleConfig = Field(default_factory=CommunityRuleConfig)
    gre_period: float = Field(default=2.0, gt=0)
    sample_period: float = Field(default=8.0, gt=0)
    channel: ChannelModel = Field(default_factory=ChannelModel)

    @property
    def complete(self) -> bool:
        return self.has_symbols and self.has_rules

    def ncf_kind(self) -> Optional[MessageKind]:
        return {
            (False, False): MessageKind.NCF0,
            (True, False): MessageKind.NCF1,
            (False, True): MessageKind.NCF2,
        }.get((self.has_symbols, self.has_rules))


@dataclass(frozen=True)
class PendingAlert:
    alert_id: int
    payload: Mapping[str, Any]
    attempts: int


@dataclass(frozen=True)
class CommunityReading:
    level: SecurityLevel
    distance: float
    heard: float


@dataclass(frozen=True)
class ProductState:
    config: ProductConfig
    phase: Phase = Phase.UNREGISTERED
    rule_state: DynamicRuleState = field(default_factory=DynamicRuleState)
    static_level: SecurityLevel = SecurityLevel.G
    dynamic_level: SecurityLevel = SecurityLevel.G
    global_level: SecurityLevel = SecurityLevel.G
    last_value: Optional[float] = None
    neighbor_levels: Mapping[int, tuple[SecurityLevel, float]] = field(default_factory=dict)
    community: Mapping[int, CommunityReading] = field(default_factory=dict)
    pending_ale: Optional[PendingAlert] = None
    timers: Mapping[Timer, float] = field(default_factory=dict)
    next_seq: int = 1
    next_alert_id: int = 1
    delivery_failures: int = 0

    @property
    def product_id(self) -> int:
        return self.config.product_id


def initial_product_state(config: ProductConfig, boot_time: float = 0.0) -> ProductState:
    """Unregistered product whose first CTR goes out at boot_time."""
    return ProductState(config=config, timers={Timer.RETRANSMIT: boot_time})


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _with_timer(state: ProductState, timer: Timer, due: Optional[float]) -> ProductState:
    timers = dict(state.timers)
    if due is None:
        timers.pop(timer, None)
    else:
        timers[timer] = due
    return replace(state, timers=timers)


def _emit(state: ProductState, kind: MessageKind, dst: int, payload: Optional[Mapping[str, Any]] = None):
    message = Message(kind=kind, src=state.product_id, dst=dst, seq=state.next_seq & 0xFFFF,
                      payload=dict(payload or {}))
    return replace(state, next_seq=state.next_seq + 1), message


def _violation(state: ProductState, message: Message) -> None:
    logger.warning(
        "protocol violation: product %d got %s from %d in phase %s",
        state.product_id, message.kind, message.src, state.phase.value,
    )


def _enter_configuration(state: ProductState, now: float):
    state = replace(state, phase=Phase.AWAITING_CONFIG)
    ncf = state.config.ncf_kind()
    if ncf is None:
        return _enter_supervising(state, now), []
    state, message = _emit(state, ncf, SINK_ID)
    return _with_timer(state, Timer.RETRANSMIT, now + CTR_RETRY_PERIOD), [message]


def _enter_supervising(state: ProductState, now: float) -> ProductState:
    state = replace(state, phase=Phase.SUPERVISING)
    state = _with_timer(state, Timer.RETRANSMIT, None)
    return _with_timer(state, Timer.GRE, now + state.config.gre_period)


def _maybe_supervise(state: ProductState, now: float) -> ProductState:
    if state.phase == Phase.AWAITING_CONFIG and state.config.complete:
        return _enter_supervising(state, now)
    return state


def _apply_rules_record(state: ProductState, payload: Mapping[str, Any]) -> Optional[ProductConfig]:
    cfg = state.config
    try:
        static_cfg = StaticRuleConfig(v_min=payload["v_min"], v_max=payload["v_max"], delta_v=payload["delta_v"])
        dynamic_cfg = DynamicRuleConfig(t_cr=payload["t_cr"], n_c=payload["n_c"])
        community_cfg = CommunityRuleConfig(d_min=payload["d_min"], delta_d=payload["delta_d"],
                                            matrix=cfg.community_cfg.matrix)
    except (KeyError, ValidationError, RuleError) as exc:
        logger.warning("product %d rejected rule record: %s", state.product_id, exc)
        return None
    return cfg.model_copy(update={
        "static_cfg": static_cfg,
        "dynamic_cfg": dynamic_cfg,
        "community_cfg": community_cfg,
        "has_rules": True,
    })


def _worst_community(state: ProductState) -> tuple[SecurityLevel, Optional[int], Optional[CommunityReading]]:
    worst, who, reading = SecurityLevel.G, None, None
    for neighbor in sorted(state.community):
        entry = state.community[neighbor]
        if entry.level > worst:
            worst, who, reading = entry.level, neighbor, entry
    return worst, who, reading


def _evict_stale(state: ProductState, now: float) -> ProductState:
    horizon = COMMUNITY_STALE_PERIODS * state.config.gre_period
    fresh = {n: r for n, r in state.community.items() if now - r.heard <= horizon}
    if len(fresh) == len(state.community):
        return state
    return replace(state, community=fresh)


def _reevaluate(state: ProductState, now: float):
    """Recompute the global level and announce upward transitions with ALE."""
    state = _evict_stale(state, now)
    community_level, neighbor, reading = _worst_community(state)
    previous = state.global_level
    level = combine_global([state.static_level, state.dynamic_level, community_level])
    state = replace(state, global_level=level)
    if level <= previous:
        return state, []

    if state.static_level == level:
        cause = "static"
    elif state.dynamic_level == level:
        cause = "dynamic"
    else:
        cause = "community"
    payload = {
        "alert_id": state.next_alert_id & 0xFFFF,
        "level": int(level),
        "cause": ALERT_CAUSES.index(cause),
        "value": state.last_value if state.last_value is not None else math.nan,
        "distance": reading.distance if reading is not None else math.nan,
        "neighbor": neighbor or 0,
    }
    assert level != SecurityLevel.G, "ALE emitted in a good state"
    state, message = _emit(state, MessageKind.ALE, SINK_ID, payload)
    state = replace(
        state,
        next_alert_id=state.next_alert_id + 1,
        pending_ale=PendingAlert(payload["alert_id"], payload, attempts=1),
    )
    return _with_timer(state, Timer.ALE_RETRY, now + ALE_RETRY_PERIOD), [message]


# ---------------------------------------------------------------------------
# event handlers
# ---------------------------------------------------------------------------

def _on_timer(state: ProductState, timer: Timer, now: float):
    due = state.timers.get(timer)
    if due is None or due > now + _EPS:
        return state, []

    if timer == Timer.RETRANSMIT:
        if state.phase in (Phase.UNREGISTERED, Phase.AWAITING_ACK):
            state, message = _emit(state, MessageKind.CTR, SINK_ID)
            state = replace(state, phase=Phase.AWAITING_ACK)
            return _with_timer(state, Timer.RETRANSMIT, now + CTR_RETRY_PERIOD), [message]
        if state.phase == Phase.AWAITING_CONFIG:
            state, message = _emit(state, state.config.ncf_kind(), SINK_ID)
            return _with_timer(state, Timer.RETRANSMIT, now + CTR_RETRY_PERIOD), [message]
        return _with_timer(state, Timer.RETRANSMIT, None), []

    if timer == Timer.GRE:
        if state.phase != Phase.SUPERVISING:
            return _with_timer(state, Timer.GRE, None), []
        state, message = _emit(state, MessageKind.GRE, BROADCAST,
                               {"level": int(state.global_level), "symbol": state.config.symbol})
        return _with_timer(state, Timer.GRE, due + state.config.gre_period), [message]

    # ALE retransmission
    pending = state.pending_ale
    if pending is None:
        return _with_timer(state, Timer.ALE_RETRY, None), []
    if pending.attempts >= ALE_MAX_ATTEMPTS:
        logger.warning("product %d: ALE %d undelivered after %d attempts",
                       state.product_id, pending.alert_id, pending.attempts)
        state = replace(state, pending_ale=None, delivery_failures=state.delivery_failures + 1)
        return _with_timer(state, Timer.ALE_RETRY, None), []
    state, message = _emit(state, MessageKind.ALE, SINK_ID, pending.payload)
    state = replace(state, pending_ale=replace(pending, attempts=pending.attempts + 1))
    return _with_timer(state, Timer.ALE_RETRY, now + ALE_RETRY_PERIOD), [message]


def _on_sample(state: ProductState, value: float, now: float):
    if state.phase != Phase.SUPERVISING:
        return state, []
    cfg = state.config
    s_sr = eval_static(value, cfg.static_cfg)
    rule_state, s_dr = update_dynamic(state.rule_state, s_sr, now, cfg.dynamic_cfg)
    state = replace(state, last_value=value, static_level=s_sr, dynamic_level=s_dr, rule_state=rule_state)
    return _reevaluate(state, now)


def _on_message(state: ProductState, event: MessageReceived, now: float):
    message = event.message
    kind = message.kind
    phase = state.phase

    if kind == MessageKind.ACKCTR:
        if phase == Phase.AWAITING_ACK:
            return _enter_configuration(state, now)
        return state, []

    if kind in (MessageKind.CMD1, MessageKind.CMD3):
        if phase not in (Phase.AWAITING_CONFIG, Phase.SUPERVISING):
            _violation(state, message)
            return state, []
        if kind == MessageKind.CMD1:
            config = state.config.model_copy(update={
                "symbol": str(message.payload.get("symbol", state.config.symbol)),
                "has_symbols": True,
            })
            state = replace(state, config=config)
        else:
            config = _apply_rules_record(state, message.payload)
            if config is None:
                return state, []
            state = replace(state, config=config, rule_state=reset_dynamic(),
                            dynamic_level=SecurityLevel.G, global_level=SecurityLevel.G)
        return _maybe_supervise(state, now), []

    if kind == MessageKind.ACKALE:
        pending = state.pending_ale
        if pending is not None and message.payload.get("alert_id") == pending.alert_id:
            state = replace(state, pending_ale=None)
            return _with_timer(state, Timer.ALE_RETRY, None), []
        return state, []

    if phase != Phase.SUPERVISING:
        # neighbors greet regardless of our phase
        if kind not in (MessageKind.GRE, MessageKind.RSI):
            _violation(state, message)
        return state, []

    if kind in (MessageKind.CMD2, MessageKind.CMD4, MessageKind.CMD5):
        cfg = state.config
        if kind == MessageKind.CMD2:
            reply, payload = MessageKind.CFG, {
                "has_symbols": cfg.has_symbols, "has_rules": cfg.has_rules,
                "gre_period": cfg.gre_period, "sample_period": cfg.sample_period, "symbol": cfg.symbol,
            }
        elif kind == MessageKind.CMD4:
            reply, payload = MessageKind.SER, rules_payload(cfg.static_cfg, cfg.dynamic_cfg, cfg.community_cfg)
        else:
            value = state.last_value if state.last_value is not None else math.nan
            reply, payload = MessageKind.INA, {"value": value, "level": int(state.global_level)}
        state, out = _emit(state, reply, message.src, payload)
        return state, [out]

    if kind == MessageKind.GRE:
        levels = dict(state.neighbor_levels)
        levels[message.src] = (SecurityLevel(message.payload.get("level", 0)), now)
        state = replace(state, neighbor_levels=levels)
        rssi = event.rssi if event.rssi is not None else math.nan
        state, out = _emit(state, MessageKind.RSI, message.src, {
            "rssi": rssi, "level": int(state.global_level), "symbol": state.config.symbol,
        })
        return state, [out]

    if kind == MessageKind.RSI:
        rssi = event.rssi if event.rssi is not None else message.payload.get("rssi", math.nan)
        if rssi is None or math.isnan(rssi):
            return state, []
        distance = rssi_to_distance(rssi, state.config.channel)
        try:
            level = eval_community(state.config.symbol, str(message.payload.get("symbol", "")),
                                   distance, state.config.community_cfg)
        except RuleError as exc:
            logger.debug("product %d: community rule skipped for %d: %s", state.product_id, message.src, exc)
            return state, []
        community = dict(state.community)
        community[message.src] = CommunityReading(level, distance, now)
        return _reevaluate(replace(state, community=community), now)

    _violation(state, message)
    return state, []


def product_step(state: ProductState, event: ProductEvent, now: float) -> tuple[ProductState, list[Message]]:
    """Deterministic transition of one product."""
    if isinstance(event, TimerFired):
        return _on_timer(state, event.timer, now)
    if isinstance(event, SensorSample):
        return _on_sample(state, event.value, now)
    if isinstance(event, MessageReceived):
        return _on_message(state, event, now)
    raise TypeError(f"unsupported product event {event!r}")
