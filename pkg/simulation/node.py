"""
Simulated nodes.

A Node owns its radio, energy ledger, MAC and routing state, and turns
received frames into routing decisions. SensorNode drives the product
state machine (timers, sensor sampling); SinkNode drives the control
center and the periodic gradient rounds.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import simpy

from protocol.events import MessageReceived, OperatorCommand, SensorSample, Timer, TimerFired
from protocol.messages import ALERT_CAUSES, BROADCAST, SINK_ID, Message, MessageKind
from protocol.product import Phase, ProductConfig, ProductState, initial_product_state, product_step
from protocol.rules import SecurityLevel
from protocol.sink import SinkState, sink_step
from routing.alert import Action, ForwardDecision, handle_inuse, handle_link_failure, originate_alert, route_alert
from routing.gradient import Hello, RoutingState, handle_hello, start_gradient_round
from routing.packets import (
    CLASS_RANK,
    NO_GRADIENT,
    Packet,
    PacketClass,
    PacketKind,
    Scope,
    control_packet,
    data_packet,
    energy_to_mj,
)
from routing.routine import InfoResponse, reconcile_neighbors, route_routine
from routing.rrr import AlertRateEstimator, RrrState, rrr_route
from simulation.channel import Frame, Medium
from simulation.energy import EnergyLedger, EnergyModel, Radio, RadioState
from simulation.kernel import EventQueue
from simulation.mac import CsmaMac, MacConfig
from simulation.trace import PacketLedger, TraceLog

logger = logging.getLogger(__name__)

INFO_RSP_RETRIES = 1


@dataclass(frozen=True)
class NetworkSettings:
    protocol: str = "ours"
    k_paths: int = 2
    gathering_window: float = 0.05
    staleness: float = 5.0
    inuse_lifetime: float = 10.0
    rrr_threshold: float = 3.0
    rrr_window: float = 5.0
    ttl: int = 8
    hello_jitter: float = 0.01
    queue_capacity: int = 32
    sink: int = SINK_ID


@dataclass
class TrialContext:
    """Shared plumbing of one trial; nodes only append to trace, ledger and deliveries."""

    queue: EventQueue
    medium: Medium
    trace: TraceLog
    ledger: PacketLedger
    settings: NetworkSettings
    # (class, origin, seq) -> relay trails of the delivered copies
    deliveries: dict[tuple[str, int, int], list[tuple[int, ...]]] = field(default_factory=dict)

    @property
    def now(self) -> float:
        return self.queue.now


class Node:
    def __init__(
        self,
        node_id: int,
        ctx: TrialContext,
        seed: np.random.SeedSequence,
        energy: EnergyModel = EnergyModel(),
        mac: MacConfig = MacConfig(),
        unlimited: bool = False,
        boot_time: float = 0.0,
    ):
        self.node_id = node_id
        self.ctx = ctx
        mac_seed, jitter_seed, rrr_seed = seed.spawn(3)
        self.rng = np.random.default_rng(jitter_seed)
        self.energy = EnergyLedger(energy, unlimited=unlimited)
        self.boot_time = boot_time
        self.booted = boot_time <= 0
        self.dead = False
        self.radio = Radio(self.energy, 0.0, RadioState.IDLE if self.booted else RadioState.SLEEP)

        settings = ctx.settings
        self.routing = RoutingState(node_id)
        self.rrr = RrrState(
            routing=self.routing,
            rng=np.random.default_rng(rrr_seed),
            threshold=settings.rrr_threshold,
            estimator=AlertRateEstimator(settings.rrr_window),
        )
        self.mac = CsmaMac(
            node_id, ctx.queue, ctx.medium, np.random.default_rng(mac_seed), mac,
            on_drop=self._on_mac_drop, on_done=self._on_mac_done, alive=lambda: self.listening,
        )
        self._net_seq = itertools.count(1)
        self._alert_inflight: dict[tuple[int, int, int], Packet] = {}
        self._gathering: Optional[list[InfoResponse]] = None
        self._request_sent: Optional[simpy.Event] = None
        self._routine_queue = simpy.Store(ctx.queue.env)
        if settings.protocol == "ours" and node_id != settings.sink:
            ctx.queue.process(self._routine_forwarder())
        if not self.booted:
            ctx.queue.schedule_at(boot_time, lambda _: self.boot(), target=node_id)

    # -- lifecycle ---------------------------------------------------------

    @property
    def listening(self) -> bool:
        if not self.booted or self.dead:
            return False
        if not self.energy.unlimited and self.radio.residual(self.ctx.now) <= 0.0:
            self._die()
            return False
        return True

    def boot(self) -> None:
        self.booted = True
        self.radio.set_state(RadioState.IDLE, self.ctx.now)
        self.ctx.trace.emit(self.ctx.now, self.node_id, "BOOT")

    def _die(self) -> None:
        self.dead = True
        self.radio.set_state(RadioState.SLEEP, self.ctx.now)
        self.ctx.trace.emit(self.ctx.now, self.node_id, "ENERGY_DEPLETED")
        logger.warning("node %d ran out of energy at t=%.3f", self.node_id, self.ctx.now)

    # -- radio callbacks ---------------------------------------------------

    def on_frame(self, frame: Frame, rssi: float) -> None:
        if not self.listening:
            return
        packet: Packet = frame.packet
        if packet.kind == PacketKind.HELLO:
            self._on_hello(packet)
        elif packet.kind == PacketKind.INUSE:
            self._on_inuse(packet)
        elif packet.kind == PacketKind.INFO_REQ:
            self._on_info_request(packet)
        elif packet.kind == PacketKind.INFO_RSP:
            self._on_info_response(packet)
        elif packet.scope == Scope.ROUTED:
            self._on_routed(packet)
        else:
            self.deliver_local(packet.message, rssi)

    def on_tx_done(self, frame: Frame, delivered: bool) -> None:
        self.mac.tx_done(frame, delivered)

    def _on_mac_drop(self, frame: Frame, cause: str) -> None:
        packet: Packet = frame.packet
        self._release_request(packet)
        if packet.kind == PacketKind.DATA and packet.scope == Scope.ROUTED:
            if cause == "mac_backoff" and self._reroute_alert(packet):
                return
            self._lose(packet, cause)

    def _on_mac_done(self, frame: Frame, delivered: bool) -> None:
        packet: Packet = frame.packet
        self._release_request(packet)
        if not delivered and packet.kind == PacketKind.DATA and packet.scope == Scope.ROUTED:
            if self._reroute_alert(packet):
                return
            self._lose(packet, "channel")

    def _release_request(self, packet: Packet) -> None:
        if packet.kind == PacketKind.INFO_REQ and self._request_sent is not None and not self._request_sent.triggered:
            self._request_sent.succeed()

    # -- sending -----------------------------------------------------------

    def send_packet(self, packet: Packet, high_power: bool = False) -> bool:
        frame = Frame(packet, self.node_id, packet.dest, packet.frame_bytes(), high_power)
        # a reply only counts inside the gathering window: one retry at most
        retries = INFO_RSP_RETRIES if packet.kind == PacketKind.INFO_RSP else None
        return self.mac.send(frame, CLASS_RANK[packet.cls], retries)

    def _send_later(self, delay: float, packet: Packet) -> None:
        self.ctx.queue.schedule(delay, lambda _: self.listening and self.send_packet(packet), target=self.node_id)

    def _lose(self, packet: Packet, cause: str) -> None:
        logger.debug("node %d: %s %d/%d path %d lost (%s)", self.node_id, packet.cls, packet.origin,
                     packet.seq, packet.path_id, cause)
        self.ctx.ledger.lost(packet.cls.value, packet.origin, packet.seq, packet.path_id, cause, packet.hops)

    # -- gradient ----------------------------------------------------------

    def _on_hello(self, packet: Packet) -> None:
        fields = packet.payload
        before = self.routing.my_gradient
        _, rebroadcast = handle_hello(self.routing, Hello(fields["round"], fields["hc"], fields["sa"]), self.ctx.now)
        if rebroadcast is None:
            return
        if self.routing.my_gradient != before:
            self.ctx.trace.emit(self.ctx.now, self.node_id, "GRADIENT", round=rebroadcast.round, hc=rebroadcast.hc)
        if rebroadcast.hc >= NO_GRADIENT:
            return
        hello = control_packet(PacketKind.HELLO, self.node_id, BROADCAST,
                               {"round": rebroadcast.round, "hc": rebroadcast.hc, "sa": self.node_id}, now=self.ctx.now)
        self._send_later(float(self.rng.uniform(0.0, self.ctx.settings.hello_jitter)), hello)

    # -- alert multipath ---------------------------------------------------

    def _forward_alert(self, packet: Packet, next_hop: int) -> None:
        out = packet.hop(self.node_id, next_hop)
        self._alert_inflight[(packet.origin, packet.seq, next_hop)] = out
        self.send_packet(out)

    def _on_inuse(self, packet: Packet) -> None:
        originator, seq = packet.payload["originator"], packet.payload["seq"]
        refuser = packet.sender
        stored = self._alert_inflight.pop((originator, seq, refuser), None)
        decision = handle_inuse(self.routing, originator, seq, refuser, self.ctx.now)
        if stored is None:
            return
        if decision.action == Action.FORWARD:
            retry = replace(stored, dest=decision.next_hop)
            self._alert_inflight[(originator, seq, decision.next_hop)] = retry
            self.send_packet(retry)
        elif decision.action == Action.DEAD_END:
            self._lose(stored, "dead_end")

    def _reroute_alert(self, packet: Packet) -> bool:
        """Send an alert copy the MAC failed to hand over to the next untried neighbor instead."""
        if packet.cls != PacketClass.ALERT or self.ctx.settings.protocol != "ours":
            return False
        if self._alert_inflight.pop((packet.origin, packet.seq, packet.dest), None) is None:
            return False
        decision = handle_link_failure(self.routing, packet.origin, packet.seq, packet.dest, self.ctx.now)
        if decision.action != Action.FORWARD:
            return False
        retry = replace(packet, dest=decision.next_hop)
        self._alert_inflight[(packet.origin, packet.seq, decision.next_hop)] = retry
        self.ctx.trace.emit(self.ctx.now, self.node_id, "REROUTE", origin=packet.origin, seq=packet.seq,
                            to=decision.next_hop)
        self.send_packet(retry)
        return True

    def _reject(self, packet: Packet) -> None:
        inuse = control_packet(PacketKind.INUSE, self.node_id, packet.sender,
                               {"originator": packet.origin, "seq": packet.seq}, now=self.ctx.now)
        self.send_packet(inuse)

    # -- routine information gathering --------------------------------------

    def _on_info_request(self, packet: Packet) -> None:
        if self.routing.my_gradient is None:
            return
        response = control_packet(
            PacketKind.INFO_RSP, self.node_id, packet.sender,
            {"id": self.node_id, "hc": self.routing.my_gradient,
             "energy_mj": energy_to_mj(self.radio.residual(self.ctx.now))},
            now=self.ctx.now,
        )
        self._send_later(float(self.rng.uniform(0.0, 0.5 * self.ctx.settings.gathering_window)), response)

    def _on_info_response(self, packet: Packet) -> None:
        if self._gathering is None or packet.dest != self.node_id:
            return
        fields = packet.payload
        self._gathering.append(InfoResponse(fields["id"], fields["hc"], fields["energy_mj"] / 1000.0))

    def _gather(self):
        self._gathering = []
        self._request_sent = self.ctx.queue.env.event()
        request = control_packet(PacketKind.INFO_REQ, self.node_id, BROADCAST, {"requester": self.node_id},
                                 now=self.ctx.now)
        if not self.send_packet(request) and not self._request_sent.triggered:
            self._request_sent.succeed()
        yield self._request_sent
        yield self.ctx.queue.timeout(self.ctx.settings.gathering_window)
        responses, self._gathering = self._gathering, None
        reconcile_neighbors(self.routing, responses, self.ctx.now, self.ctx.settings.staleness)
        return responses

    def _routine_forwarder(self):
        while True:
            packet = yield self._routine_queue.get()
            if not self.listening:
                self._lose(packet, "energy")
                continue
            if self.routing.my_gradient is None:
                self._lose(packet, "no_route")
                continue
            responses = yield from self._gather()
            decision = route_routine(self.routing, packet, responses, self.ctx.settings.sink)
            if decision.action == Action.DROP and decision.reason == "no_responders":
                responses = yield from self._gather()
                decision = route_routine(self.routing, packet, responses, self.ctx.settings.sink)
            self._apply(packet, decision)
            # routine packets that queued up during the exchange share its answers
            for waiting in self._drain_routine():
                self._apply(waiting, route_routine(self.routing, waiting, responses, self.ctx.settings.sink))

    def _drain_routine(self) -> list[Packet]:
        waiting = list(self._routine_queue.items)
        self._routine_queue.items.clear()
        return waiting

    def _enqueue_routine(self, packet: Packet) -> None:
        if len(self._routine_queue.items) >= self.ctx.settings.queue_capacity:
            self._lose(packet, "queue_overflow")
            return
        self._routine_queue.put(packet)

    # -- routed data -------------------------------------------------------

    def _apply(self, packet: Packet, decision: ForwardDecision) -> None:
        if decision.action == Action.FORWARD:
            if packet.cls == PacketClass.ALERT and self.ctx.settings.protocol == "ours":
                self._forward_alert(packet, decision.next_hop)
            else:
                self.send_packet(packet.hop(self.node_id, decision.next_hop))
        elif decision.action == Action.REJECT_INUSE:
            self._reject(packet)
        elif decision.action == Action.ACCEPT_AT_SINK:
            self.accept(packet)
        else:
            self._lose(packet, decision.reason or "dead_end")

    def _route(self, packet: Packet) -> None:
        settings = self.ctx.settings
        if settings.protocol == "rrr":
            self._apply(packet, rrr_route(self.rrr, packet, self.ctx.now, settings.sink))
        elif packet.cls == PacketClass.ALERT:
            self._apply(packet, route_alert(self.routing, packet, self.ctx.now, settings.sink, settings.inuse_lifetime))
        else:
            self._enqueue_routine(packet)

    def _on_routed(self, packet: Packet) -> None:
        if self.node_id == self.ctx.settings.sink:
            self.accept(packet)
        else:
            self._route(packet)

    def originate(self, message: Message, synthetic: bool = False) -> Packet:
        """Inject an uplink message towards the sink."""
        settings = self.ctx.settings
        seq = next(self._net_seq) & 0xFFFF
        packet = data_packet(message, seq, self.ctx.now, Scope.ROUTED, ttl=settings.ttl, synthetic=synthetic)
        ledger = self.ctx.ledger
        if self.routing.my_gradient is None or not self.listening:
            ledger.born(packet.cls.value, packet.origin, seq, self.ctx.now)
            self._lose(packet, "no_route" if self.listening else "energy")
            return packet
        if packet.cls == PacketClass.ALERT and settings.protocol == "ours":
            decisions = originate_alert(self.routing, seq, self.ctx.now, settings.k_paths, settings.inuse_lifetime)
            for path_id, decision in enumerate(decisions):
                copy = replace(packet, path_id=path_id)
                ledger.born(copy.cls.value, copy.origin, seq, self.ctx.now, path_id)
                if decision.action == Action.FORWARD:
                    self._forward_alert(copy, decision.next_hop)
                else:
                    self._lose(copy, "dead_end")
            return packet
        ledger.born(packet.cls.value, packet.origin, seq, self.ctx.now)
        self._route(packet)
        return packet

    def accept(self, packet: Packet) -> None:
        ctx = self.ctx
        ctx.ledger.delivered(packet.cls.value, packet.origin, packet.seq, packet.path_id, ctx.now, packet.hops)
        ctx.deliveries.setdefault(packet.key, []).append(packet.trail)

    def deliver_local(self, message: Optional[Message], rssi: Optional[float]) -> None:
        """Single-hop application message (GRE/RSI or sink downlink)."""


class SensorNode(Node):
    """Product node running the product state machine."""

    def __init__(self, node_id: int, ctx: TrialContext, seed: np.random.SeedSequence,
                 product: Optional[ProductConfig] = None, temperature=None, **kwargs):
        sample_seed, node_seed = seed.spawn(2)
        super().__init__(node_id, ctx, node_seed, **kwargs)
        self.sample_rng = np.random.default_rng(sample_seed)
        self.temperature = temperature
        self.app: Optional[ProductState] = None
        self._armed: dict[Timer, float] = {}
        self._sampling = False
        if product is not None:
            self.app = initial_product_state(product, self.boot_time)
            if self.booted:
                ctx.queue.schedule(0.0, lambda _: self._arm(), target=node_id)

    def boot(self) -> None:
        super().boot()
        if self.app is not None:
            self._arm()

    def _arm(self) -> None:
        for timer in [t for t in self._armed if t not in self.app.timers]:
            del self._armed[timer]
        for timer, due in self.app.timers.items():
            if self._armed.get(timer) != due:
                self._armed[timer] = due
                self.ctx.queue.schedule_at(due, lambda _, t=timer: self.step(TimerFired(t)), target=self.node_id)

    def step(self, event) -> list[Message]:
        if self.app is None or not self.listening:
            return []
        now = self.ctx.now
        before = self.app
        self.app, out = product_step(before, event, now)
        self._observe(before, self.app, event)
        for message in out:
            self._trace_send(message)
            self._dispatch(message)
        self._arm()
        return out

    def _observe(self, before: ProductState, after: ProductState, event) -> None:
        trace, now = self.ctx.trace, self.ctx.now
        if isinstance(event, SensorSample):
            trace.emit(now, self.node_id, "SAMPLE", value=float(event.value),
                       vmax=float(after.config.static_cfg.v_max), level=after.static_level)
        if before.phase != Phase.SUPERVISING and after.phase == Phase.SUPERVISING:
            trace.emit(now, self.node_id, "CONFIGURED", symbol=after.config.symbol or "-")
            self._start_sampling()
        if after.global_level != before.global_level:
            trace.emit(now, self.node_id, "LEVEL", level=after.global_level)
        if after.delivery_failures > before.delivery_failures:
            trace.emit(now, self.node_id, "ALE_FAILED")

    def _trace_send(self, message: Message) -> None:
        dst = "all" if message.is_broadcast else message.dst
        extra = {}
        if message.kind == MessageKind.ALE:
            extra = {"level": SecurityLevel(message.payload["level"]),
                     "cause": ALERT_CAUSES[message.payload["cause"]]}
        self.ctx.trace.emit(self.ctx.now, self.node_id, "SEND", kind=message.kind, dst=dst, **extra)

    def _dispatch(self, message: Message) -> None:
        if message.dst == SINK_ID:
            self.originate(message)
            return
        seq = next(self._net_seq) & 0xFFFF
        self.send_packet(data_packet(message, seq, self.ctx.now, Scope.LOCAL))

    def deliver_local(self, message: Optional[Message], rssi: Optional[float]) -> None:
        if self.app is None or message is None or message.dst not in (self.node_id, BROADCAST):
            return
        self.ctx.trace.emit(self.ctx.now, self.node_id, "RECV", kind=message.kind, src=message.src)
        self.step(MessageReceived(message, rssi))

    def _start_sampling(self) -> None:
        if self._sampling or self.temperature is None:
            return
        self._sampling = True
        self.ctx.queue.process(self._sampler())

    def _sampler(self):
        k = 0
        period = self.app.config.sample_period
        while True:
            noise = float(self.sample_rng.standard_normal())
            self.step(SensorSample(self.temperature(k, noise)))
            k += 1
            yield self.ctx.queue.timeout(period)


class SinkNode(Node):
    """Control center: gradient rounds, uplink delivery and the sink state machine."""

    def __init__(self, node_id: int, ctx: TrialContext, seed: np.random.SeedSequence,
                 app: Optional[SinkState] = None, gradient_start: float = 0.0,
                 gradient_period: float = 100.0, **kwargs):
        super().__init__(node_id, ctx, seed, unlimited=True, **kwargs)
        self.app = app
        self.gradient_period = gradient_period
        ctx.queue.schedule_at(gradient_start, lambda _: ctx.queue.process(self._gradient_rounds()), target=node_id)

    def _gradient_rounds(self):
        while True:
            hello = start_gradient_round(self.routing)
            self.ctx.trace.emit(self.ctx.now, self.node_id, "GRADIENT", round=hello.round, hc=0)
            self.send_packet(control_packet(PacketKind.HELLO, self.node_id, BROADCAST,
                                            {"round": hello.round, "hc": hello.hc, "sa": hello.sa}, now=self.ctx.now))
            yield self.ctx.queue.timeout(self.gradient_period)

    def accept(self, packet: Packet) -> None:
        super().accept(packet)
        if self.app is None or packet.synthetic or packet.message is None:
            return
        if len(self.ctx.deliveries[packet.key]) > 1:
            return  # later copy of a multipath alert
        message = packet.message
        self.ctx.trace.emit(self.ctx.now, self.node_id, "RECV", kind=message.kind, src=message.src)
        self._step(MessageReceived(message))

    def command(self, command: OperatorCommand) -> list[Message]:
        if self.app is None:
            return []
        self.ctx.trace.emit(self.ctx.now, self.node_id, "COMMAND", action=command.action, target=command.target)
        return self._step(command)

    def _step(self, event) -> list[Message]:
        self.app, out = sink_step(self.app, event, self.ctx.now)
        for message in out:
            self.ctx.trace.emit(self.ctx.now, self.node_id, "SEND", kind=message.kind, dst=message.dst)
            seq = next(self._net_seq) & 0xFFFF
            self.send_packet(data_packet(message, seq, self.ctx.now, Scope.DOWNLINK), high_power=True)
        return out
