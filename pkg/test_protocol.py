"""
Product and sink state machines, message codec and RSSI ranging.
"""
import logging
import math

import pytest

from protocol.events import MessageReceived, OperatorCommand, SensorSample, Timer, TimerFired
from protocol.messages import (
    BROADCAST,
    SINK_ID,
    CodecError,
    Message,
    MessageKind,
    decode,
    encode,
    rules_payload,
)
from protocol.product import (
    ALE_MAX_ATTEMPTS,
    CTR_RETRY_PERIOD,
    Phase,
    ProductConfig,
    initial_product_state,
    product_step,
)
from protocol.ranging import distance_to_rssi, rssi_to_distance
from protocol.rules import (
    CommunityRuleConfig,
    CompatibilityMatrix,
    DynamicRuleConfig,
    SecurityLevel,
    StaticRuleConfig,
)
from protocol.sink import DEDUP_WINDOW, ProductProvision, SinkState, sink_step
from simulation.channel import ChannelModel

MATRIX = CompatibilityMatrix.from_text("NH3 HNO3 incompatible\nH2O\n")


def make_config(has_symbols=True, has_rules=True, **changes) -> ProductConfig:
    values = dict(
        product_id=1,
        symbol="NH3" if has_symbols else "",
        has_symbols=has_symbols,
        has_rules=has_rules,
        static_cfg=StaticRuleConfig(v_min=0, v_max=14, delta_v=0),
        dynamic_cfg=DynamicRuleConfig(t_cr=30, n_c=3),
        community_cfg=CommunityRuleConfig(d_min=5, delta_d=3, matrix=MATRIX),
    )
    values.update(changes)
    return ProductConfig(**values)


def from_sink(kind, payload=None, dst=1, seq=1):
    return MessageReceived(Message(kind=kind, src=SINK_ID, dst=dst, seq=seq, payload=payload or {}))


def supervising(config=None, now=0.1):
    state = initial_product_state(config or make_config(), 0.0)
    state, _ = product_step(state, TimerFired(Timer.RETRANSMIT), 0.0)
    state, _ = product_step(state, from_sink(MessageKind.ACKCTR), now)
    assert state.phase == Phase.SUPERVISING
    return state


# -- registration / configuration --------------------------------------------

def test_ctr_is_retransmitted_until_acknowledged():
    state = initial_product_state(make_config(), 0.0)
    state, out = product_step(state, TimerFired(Timer.RETRANSMIT), 0.0)
    assert [m.kind for m in out] == [MessageKind.CTR]
    assert state.phase == Phase.AWAITING_ACK
    assert state.timers[Timer.RETRANSMIT] == CTR_RETRY_PERIOD

    state, out = product_step(state, TimerFired(Timer.RETRANSMIT), CTR_RETRY_PERIOD)
    assert [m.kind for m in out] == [MessageKind.CTR]
    assert out[0].seq == 2


def test_ackctr_leads_to_ncf_variant():
    expected = {
        (False, False): MessageKind.NCF0,
        (True, False): MessageKind.NCF1,
        (False, True): MessageKind.NCF2,
    }
    for (has_symbols, has_rules), kind in expected.items():
        state = initial_product_state(make_config(has_symbols, has_rules), 0.0)
        state, _ = product_step(state, TimerFired(Timer.RETRANSMIT), 0.0)
        state, out = product_step(state, from_sink(MessageKind.ACKCTR), 0.2)
        assert state.phase == Phase.AWAITING_CONFIG
        assert [m.kind for m in out] == [kind]


def test_complete_product_supervises_right_after_ackctr():
    state = supervising(now=0.5)
    assert Timer.RETRANSMIT not in state.timers
    assert state.timers[Timer.GRE] == pytest.approx(2.5)


def test_ncf0_needs_both_commands():
    state = initial_product_state(make_config(False, False), 0.0)
    state, _ = product_step(state, TimerFired(Timer.RETRANSMIT), 0.0)
    state, _ = product_step(state, from_sink(MessageKind.ACKCTR), 0.1)
    state, out = product_step(state, from_sink(MessageKind.CMD1, {"symbol": "NH3"}), 0.2)
    assert out == [] and state.phase == Phase.AWAITING_CONFIG
    rules = rules_payload(StaticRuleConfig(v_max=30), DynamicRuleConfig(), CommunityRuleConfig())
    state, out = product_step(state, from_sink(MessageKind.CMD3, rules), 0.3)
    assert out == []
    assert state.phase == Phase.SUPERVISING
    assert state.config.symbol == "NH3"
    assert state.config.static_cfg.v_max == 30
    # the preinstalled matrix survives the rule record
    assert state.config.community_cfg.matrix == MATRIX


def test_replayed_ackctr_is_ignored():
    state = supervising()
    again, out = product_step(state, from_sink(MessageKind.ACKCTR), 1.0)
    assert out == [] and again == state


def test_stale_timer_is_ignored():
    state = supervising()
    again, out = product_step(state, TimerFired(Timer.RETRANSMIT), 2.0)
    assert out == [] and again == state


def test_command_in_impossible_phase_is_logged(caplog):
    state = initial_product_state(make_config(), 0.0)
    with caplog.at_level(logging.WARNING, logger="protocol.product"):
        again, out = product_step(state, from_sink(MessageKind.CMD4), 0.0)
    assert out == [] and again == state
    assert "protocol violation" in caplog.text


# -- supervising -------------------------------------------------------------

def test_gre_period_is_exact():
    state = supervising(make_config(gre_period=2.0), now=0.1)
    sent = []
    for _ in range(4):
        due = state.timers[Timer.GRE]
        state, out = product_step(state, TimerFired(Timer.GRE), due)
        assert [m.kind for m in out] == [MessageKind.GRE]
        assert out[0].dst == BROADCAST
        sent.append(due)
    gaps = [b - a for a, b in zip(sent, sent[1:])]
    assert gaps == pytest.approx([2.0, 2.0, 2.0])


def test_rising_temperature_alerts_at_fifteen():
    state = supervising()
    alerts = []
    for k, value in enumerate([7, 9, 11, 13, 15]):
        state, out = product_step(state, SensorSample(float(value)), 1.0 + 8 * k)
        alerts.append([m for m in out if m.kind == MessageKind.ALE])
    assert [len(a) for a in alerts] == [0, 0, 0, 0, 1]
    payload = alerts[-1][0].payload
    assert payload["level"] == SecurityLevel.D
    assert payload["cause"] == 0  # static
    assert payload["value"] == 15.0
    assert state.global_level == SecurityLevel.D


def test_no_new_alert_without_upward_transition():
    state = supervising()
    state, out = product_step(state, SensorSample(20.0), 1.0)
    assert len(out) == 1
    state, out = product_step(state, SensorSample(21.0), 9.0)
    assert out == []


def test_ale_retransmits_until_acknowledged():
    state = supervising()
    state, out = product_step(state, SensorSample(20.0), 1.0)
    alert_id = out[0].payload["alert_id"]
    due = state.timers[Timer.ALE_RETRY]
    state, out = product_step(state, TimerFired(Timer.ALE_RETRY), due)
    assert [m.kind for m in out] == [MessageKind.ALE]
    assert out[0].payload["alert_id"] == alert_id

    state, out = product_step(state, from_sink(MessageKind.ACKALE, {"alert_id": alert_id}), due + 0.1)
    assert out == [] and state.pending_ale is None
    assert Timer.ALE_RETRY not in state.timers
    again, out = product_step(state, from_sink(MessageKind.ACKALE, {"alert_id": alert_id}), due + 0.2)
    assert out == [] and again == state


def test_ale_gives_up_after_max_attempts():
    state = supervising()
    state, out = product_step(state, SensorSample(20.0), 1.0)
    sent = len(out)
    while Timer.ALE_RETRY in state.timers:
        state, out = product_step(state, TimerFired(Timer.ALE_RETRY), state.timers[Timer.ALE_RETRY])
        sent += len(out)
    assert sent == ALE_MAX_ATTEMPTS
    assert state.delivery_failures == 1
    assert state.pending_ale is None


def test_gre_is_answered_with_rsi():
    state = supervising()
    gre = Message(kind=MessageKind.GRE, src=2, dst=BROADCAST, payload={"level": 1, "symbol": "HNO3"})
    state, out = product_step(state, MessageReceived(gre, rssi=-70.0), 3.0)
    assert len(out) == 1
    rsi = out[0]
    assert rsi.kind == MessageKind.RSI and rsi.dst == 2
    assert rsi.payload["rssi"] == -70.0
    assert state.neighbor_levels[2] == (SecurityLevel.B, 3.0)


@pytest.mark.parametrize("distance, level", [(3.0, SecurityLevel.D), (6.0, SecurityLevel.B), (12.0, None)])
def test_rsi_from_incompatible_neighbor(distance, level):
    config = make_config()
    state = supervising(config)
    rssi = distance_to_rssi(distance, config.channel)
    rsi = Message(kind=MessageKind.RSI, src=2, dst=1, payload={"rssi": -1.0, "level": 0, "symbol": "HNO3"})
    state, out = product_step(state, MessageReceived(rsi, rssi=rssi), 3.0)
    if level is None:
        assert out == []
        return
    assert [m.kind for m in out] == [MessageKind.ALE]
    payload = out[0].payload
    assert payload["level"] == level
    assert payload["cause"] == 2  # community
    assert payload["neighbor"] == 2
    assert payload["distance"] == pytest.approx(distance, rel=1e-6)


def test_rsi_from_compatible_neighbor_stays_good():
    state = supervising()
    rsi = Message(kind=MessageKind.RSI, src=3, dst=1, payload={"rssi": 0.0, "level": 0, "symbol": "NH3"})
    state, out = product_step(state, MessageReceived(rsi, rssi=-50.0), 3.0)
    assert out == [] and state.global_level == SecurityLevel.G


def test_community_entry_expires():
    config = make_config(gre_period=2.0)
    state = supervising(config)
    rsi = Message(kind=MessageKind.RSI, src=2, dst=1, payload={"rssi": 0.0, "level": 0, "symbol": "HNO3"})
    state, _ = product_step(state, MessageReceived(rsi, rssi=distance_to_rssi(6.0, config.channel)), 3.0)
    assert state.global_level == SecurityLevel.B
    state, _ = product_step(state, SensorSample(10.0), 3.0 + 3 * 2.0 + 0.5)
    assert 2 not in state.community
    assert state.global_level == SecurityLevel.G


def test_queries_are_answered():
    state = supervising()
    state, _ = product_step(state, SensorSample(10.0), 1.0)
    replies = {}
    for kind in (MessageKind.CMD2, MessageKind.CMD4, MessageKind.CMD5):
        state, out = product_step(state, from_sink(kind), 2.0)
        replies[kind] = out[0]
    assert replies[MessageKind.CMD2].kind == MessageKind.CFG
    assert replies[MessageKind.CMD2].payload["symbol"] == "NH3"
    assert replies[MessageKind.CMD4].kind == MessageKind.SER
    assert replies[MessageKind.CMD4].payload["v_max"] == 14
    assert replies[MessageKind.CMD5].kind == MessageKind.INA
    assert replies[MessageKind.CMD5].payload == {"value": 10.0, "level": 0}
    assert all(m.dst == SINK_ID for m in replies.values())


def test_cmd3_reset_clears_latched_dynamic_state():
    config = make_config(static_cfg=StaticRuleConfig(v_min=0, v_max=14, delta_v=2),
                         dynamic_cfg=DynamicRuleConfig(t_cr=5, n_c=10))
    state = supervising(config)
    for t in (1.0, 4.0, 7.0):
        state, _ = product_step(state, SensorSample(13.0), t)
    assert state.rule_state.latched and state.global_level == SecurityLevel.D
    rules = rules_payload(config.static_cfg, config.dynamic_cfg, config.community_cfg)
    state, _ = product_step(state, from_sink(MessageKind.CMD3, rules), 8.0)
    assert not state.rule_state.latched
    assert state.global_level == SecurityLevel.G


def test_cmd3_with_empty_good_band_is_rejected(caplog):
    config = make_config(static_cfg=StaticRuleConfig(v_min=0, v_max=14, delta_v=2))
    state = supervising(config)
    rules = rules_payload(config.static_cfg, config.dynamic_cfg, config.community_cfg)
    rules.update(v_min=10, v_max=12, delta_v=2)
    with caplog.at_level(logging.WARNING, logger="protocol.product"):
        state, out = product_step(state, from_sink(MessageKind.CMD3, rules), 1.0)
    assert out == []
    assert state.config.static_cfg == config.static_cfg
    assert "rejected rule record" in caplog.text


# -- sink --------------------------------------------------------------------

def to_sink(kind, src=3, seq=1, payload=None):
    return MessageReceived(Message(kind=kind, src=src, dst=SINK_ID, seq=seq, payload=payload or {}))


def test_sink_registers_and_reacknowledges():
    state, out = sink_step(SinkState(), to_sink(MessageKind.CTR), 1.0)
    assert [(m.kind, m.dst) for m in out] == [(MessageKind.ACKCTR, 3)]
    assert state.registry[3].registered
    state, out = sink_step(state, to_sink(MessageKind.CTR, seq=2), 3.0)
    assert [m.kind for m in out] == [MessageKind.ACKCTR]


@pytest.mark.parametrize("ncf, kinds", [
    (MessageKind.NCF0, [MessageKind.CMD1, MessageKind.CMD3]),
    (MessageKind.NCF1, [MessageKind.CMD3]),
    (MessageKind.NCF2, [MessageKind.CMD1]),
])
def test_sink_fills_configuration_gaps(ncf, kinds):
    catalog = {3: ProductProvision(symbol="HNO3", static_cfg=StaticRuleConfig(v_max=25))}
    state, out = sink_step(SinkState(catalog=catalog), to_sink(ncf), 1.0)
    assert [m.kind for m in out] == kinds
    for message in out:
        if message.kind == MessageKind.CMD1:
            assert message.payload["symbol"] == "HNO3"
        else:
            assert message.payload["v_max"] == 25
    assert state.registry[3].configured


def test_sink_acknowledges_each_alert_once():
    payload = {"alert_id": 4, "level": 2, "cause": 0, "value": 15.0, "distance": math.nan, "neighbor": 0}
    state, out = sink_step(SinkState(), to_sink(MessageKind.ALE, seq=10, payload=payload), 5.0)
    assert [(m.kind, m.dst, m.payload["alert_id"]) for m in out] == [(MessageKind.ACKALE, 3, 4)]
    assert len(state.alert_log) == 1
    assert state.registry[3].level == SecurityLevel.D

    # second copy of the same frame
    state, out = sink_step(state, to_sink(MessageKind.ALE, seq=10, payload=payload), 5.1)
    assert out == []
    # retransmission of the same alert
    state, out = sink_step(state, to_sink(MessageKind.ALE, seq=11, payload=payload), 5.5)
    assert [m.kind for m in out] == [MessageKind.ACKALE]
    assert len(state.alert_log) == 1


def test_sink_dedup_memory_is_bounded():
    state = SinkState()
    for n in range(DEDUP_WINDOW + 10):
        payload = {"alert_id": n, "level": 1, "cause": 0, "value": 15.0, "distance": math.nan, "neighbor": 0}
        state, _ = sink_step(state, to_sink(MessageKind.ALE, seq=n, payload=payload), float(n))
    assert len(state.acked[3]) == DEDUP_WINDOW
    assert len(state.seen_alerts[3]) == DEDUP_WINDOW
    assert len(state.alert_log) == DEDUP_WINDOW + 10
    # recent frames are still recognised as duplicates
    recent = {"alert_id": DEDUP_WINDOW + 9, "level": 1, "cause": 0, "value": 15.0, "distance": math.nan, "neighbor": 0}
    _, out = sink_step(state, to_sink(MessageKind.ALE, seq=DEDUP_WINDOW + 9, payload=recent), 99.0)
    assert out == []


def test_sink_operator_query_round_trip():
    state, out = sink_step(SinkState(), OperatorCommand("query-ambient", 5), 10.0)
    assert [(m.kind, m.dst) for m in out] == [(MessageKind.CMD5, 5)]
    assert len(state.pending_queries) == 1
    state, out = sink_step(state, to_sink(MessageKind.INA, src=5, payload={"value": 21.5, "level": 1}), 10.4)
    assert out == []
    assert state.pending_queries == ()
    assert state.responses[0].latency == pytest.approx(0.4)
    assert state.registry[5].level == SecurityLevel.B


def test_sink_reset_sends_rules():
    state, out = sink_step(SinkState(), OperatorCommand("reset", 2), 1.0)
    assert [(m.kind, m.dst) for m in out] == [(MessageKind.CMD3, 2)]


def test_registration_converges_without_loss():
    """Lossless product/sink exchange reaches supervising in a bounded number of steps."""
    product = initial_product_state(make_config(False, False), 0.0)
    sink = SinkState(catalog={1: ProductProvision(symbol="NH3")})
    product, inbox = product_step(product, TimerFired(Timer.RETRANSMIT), 0.0)
    exchanged, now = 0, 0.0
    while inbox:
        now += 0.01
        replies = []
        for message in inbox:
            exchanged += 1
            sink, out = sink_step(sink, MessageReceived(message), now)
            for reply in out:
                product, back = product_step(product, MessageReceived(reply), now)
                replies.extend(back)
        inbox = replies
    assert product.phase == Phase.SUPERVISING
    assert exchanged == 2  # CTR, NCF0
    assert sink.registry[1].configured


# -- codec and ranging -------------------------------------------------------

def test_codec_header_and_symbol():
    message = Message(kind=MessageKind.GRE, src=7, dst=BROADCAST, seq=300, payload={"level": 1, "symbol": "HNO3"})
    data = encode(message)
    assert data[0] == list(MessageKind).index(MessageKind.GRE) + 1
    assert decode(data) == message
    assert message.size_bytes() == len(data)


def test_codec_errors():
    with pytest.raises(CodecError):
        encode(Message(kind=MessageKind.CMD1, src=0, dst=1, payload={"symbol": "X" * 120}))
    with pytest.raises(CodecError):
        decode(bytes([99, 0, 0, 0, 0, 0, 0]))
    with pytest.raises(CodecError):
        encode(Message(kind=MessageKind.INA, src=1, dst=0, payload={"value": 1.0}))


def test_decode_rejects_corrupt_symbol():
    data = encode(Message(kind=MessageKind.GRE, src=7, dst=BROADCAST, payload={"level": 0, "symbol": "HNO3"}))
    with pytest.raises(CodecError, match="UTF-8"):
        decode(data[:-4] + b"\xff\xfe\xfd\xfc")
    overlong = bytearray(data)
    overlong[-5] = 9
    with pytest.raises(CodecError, match="declares 9 bytes"):
        decode(bytes(overlong))
    assert decode(data).payload["symbol"] == "HNO3"


def test_rssi_reference_point_and_decade():
    model = ChannelModel()
    assert rssi_to_distance(model.tx_power - model.pl_d0, model) == model.d0
    assert rssi_to_distance(0.0, model) == model.d0
    at_ten = distance_to_rssi(10.0, model)
    assert rssi_to_distance(at_ten - 10 * model.path_loss_exponent, model) == pytest.approx(100.0)


@pytest.mark.parametrize("distance", [1.0, 5.0, 10.0, 20.0])
def test_rssi_inverts_mean_path_loss(distance):
    model = ChannelModel()
    assert rssi_to_distance(model.mean_rx_power(distance), model) == pytest.approx(distance, rel=1e-6)
