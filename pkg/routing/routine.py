"""
Energy-aware routing for routine packets.

Every hop gathers INFO_RSP{id, hc, energy} for a short window, reconciles
its neighbor table with the responders, then forwards to the neighbor with
the higher residual energy among the two lowest-hc responders.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from routing.alert import Action, ForwardDecision
from routing.gradient import RoutingState
from routing.packets import Packet

logger = logging.getLogger(__name__)

GATHERING_WINDOW = 0.05
STALENESS = 5.0


@dataclass(frozen=True)
class InfoResponse:
    node_id: int
    hc: int
    energy: float


def reconcile_neighbors(state: RoutingState, responses: Iterable[InfoResponse], now: float,
                        staleness: float = STALENESS) -> RoutingState:
    """Add newcomers, refresh responders and drop absentees not heard within the staleness window."""
    responders = set()
    for response in responses:
        state.upsert(response.node_id, response.hc, now, response.energy)
        responders.add(response.node_id)
    for neighbor in [n for n, e in state.neighbors.items() if n not in responders and now - e.last_seen > staleness]:
        del state.neighbors[neighbor]
    return state


def select_next_hop(state: RoutingState, responses: Sequence[InfoResponse], sink: int = 0,
                    previous_hop: Optional[int] = None) -> Optional[int]:
    """
    Pick the routine next hop among responders.

    Candidates must satisfy hc <= own hc + 1. The sink wins outright. The
    node the packet just came from is not a candidate unless it is the only
    one, which rules out two-node ping-pong. Of the two lowest (hc, id)
    candidates, the higher energy wins, then the lower hc, then the lower id.
    """
    if state.my_gradient is None:
        return None
    candidates = [r for r in responses if r.hc <= state.my_gradient + 1 and r.node_id != state.node_id]
    if any(r.node_id == sink for r in candidates):
        return sink
    if previous_hop is not None and len(candidates) > 1:
        candidates = [r for r in candidates if r.node_id != previous_hop]
    if not candidates:
        return None
    pair = sorted(candidates, key=lambda r: (r.hc, r.node_id))[:2]
    best = min(pair, key=lambda r: (-r.energy, r.hc, r.node_id))
    return best.node_id


def route_routine(state: RoutingState, packet: Packet, responses: Sequence[InfoResponse],
                  sink: int = 0) -> ForwardDecision:
    """Decision for a routine packet once this hop's gathering window closed."""
    if state.node_id == sink:
        return ForwardDecision(Action.ACCEPT_AT_SINK)
    if state.my_gradient is None:
        return ForwardDecision(Action.DROP, reason="no_route")
    if packet.ttl and packet.hops >= packet.ttl:
        return ForwardDecision(Action.DROP, reason="ttl")
    hop = select_next_hop(state, responses, sink, previous_hop=packet.sender if packet.hops else None)
    if hop is None:
        return ForwardDecision(Action.DROP, reason="no_responders")
    return ForwardDecision(Action.FORWARD, hop)
