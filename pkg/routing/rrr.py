"""
Random Re-Routing baseline.

Below the alert-rate threshold every packet follows the preferred
(lowest hc, lowest id) neighbor. Above it, alerts keep the preferred path
and routine packets go to a uniformly random neighbor with hc <= own hc.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from routing.alert import Action, ForwardDecision
from routing.gradient import RoutingState
from routing.packets import Packet, PacketClass

logger = logging.getLogger(__name__)

RRR_THRESHOLD = 3.0
RATE_WINDOW = 5.0


class AlertRateEstimator:
    """Sliding-window count of forwarded alert packets, in pkt/s."""

    def __init__(self, window: float = RATE_WINDOW):
        if window <= 0:
            raise ValueError("window must be positive")
        self.window = window
        self._stamps: deque[float] = deque()

    def record(self, now: float) -> None:
        self._stamps.append(now)
        self._trim(now)

    def rate(self, now: float) -> float:
        self._trim(now)
        return len(self._stamps) / self.window

    def _trim(self, now: float) -> None:
        while self._stamps and self._stamps[0] <= now - self.window:
            self._stamps.popleft()


@dataclass
class RrrState:
    routing: RoutingState
    rng: np.random.Generator
    threshold: float = RRR_THRESHOLD
    estimator: AlertRateEstimator = field(default_factory=AlertRateEstimator)

    def alert_rate_estimate(self, now: float) -> float:
        return self.estimator.rate(now)


def preferred_hop(routing: RoutingState, previous_hop=None):
    preferred = routing.preferred_neighbors(exclude=[routing.node_id])
    if previous_hop is not None and len(preferred) > 1:
        preferred = [e for e in preferred if e.neighbor_id != previous_hop]
    return preferred[0].neighbor_id if preferred else None


def rrr_route(state: RrrState, packet: Packet, now: float, sink: int = 0) -> ForwardDecision:
    routing = state.routing
    if routing.node_id == sink:
        return ForwardDecision(Action.ACCEPT_AT_SINK)
    if routing.my_gradient is None:
        return ForwardDecision(Action.DROP, reason="no_route")
    if packet.ttl and packet.hops >= packet.ttl:
        return ForwardDecision(Action.DROP, reason="ttl")

    if packet.cls == PacketClass.ALERT:
        state.estimator.record(now)
    previous = packet.sender if packet.hops else None
    if packet.cls == PacketClass.ALERT or state.estimator.rate(now) <= state.threshold:
        hop = preferred_hop(routing, previous)
    else:
        secondary = sorted(
            e.neighbor_id for e in routing.neighbors.values()
            if e.hc <= routing.my_gradient and e.neighbor_id != routing.node_id
        )
        hop = secondary[int(state.rng.integers(len(secondary)))] if secondary else None
    if hop is None:
        return ForwardDecision(Action.DROP, reason="no_route")
    return ForwardDecision(Action.FORWARD, hop)
