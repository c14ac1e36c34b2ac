"""
Node-disjoint multipath routing for alert packets.

The source sends k copies, copy j to its j-th preferred neighbor. An
intermediate node accepts the first copy of an (originator, seq) and
answers INUSE to any later one, so accepted copies never share a relay.
A refused sender retries its next untried neighbor, and so does a sender
whose copy the link layer failed to hand over: the failed neighbor never
accepted the copy, so skipping it keeps the paths disjoint.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from routing.gradient import AlertRoute, RoutingState
from routing.packets import Packet

logger = logging.getLogger(__name__)

DEFAULT_PATHS = 2
INUSE_LIFETIME = 10.0


class Action(str, Enum):
    FORWARD = "forward"
    ACCEPT_AT_SINK = "accept_at_sink"
    REJECT_INUSE = "reject_inuse"
    DEAD_END = "dead_end"
    DROP = "drop"


@dataclass(frozen=True)
class ForwardDecision:
    action: Action
    next_hop: Optional[int] = None
    reason: str = ""


def _expire(state: RoutingState, now: float) -> None:
    stale = [key for key, expiry in state.accepted_alert_seqs.items() if expiry <= now]
    for key in stale:
        del state.accepted_alert_seqs[key]
        for route_key in [rk for rk in state.alert_routes if rk[:2] == key]:
            del state.alert_routes[route_key]


def originate_alert(state: RoutingState, origin_seq: int, now: float, k: int = DEFAULT_PATHS,
                    lifetime: float = INUSE_LIFETIME) -> list[ForwardDecision]:
    """One decision per copy; copies without a distinct neighbor dead-end at the source."""
    _expire(state, now)
    key = (state.node_id, origin_seq)
    state.accepted_alert_seqs[key] = now + lifetime
    preferred = state.preferred_neighbors(exclude=[state.node_id])
    decisions: list[ForwardDecision] = []
    first_hops = {e.neighbor_id for e in preferred[:k]}
    for path_id in range(k):
        if path_id < len(preferred):
            hop = preferred[path_id].neighbor_id
            tried = {state.node_id} | first_hops
            state.alert_routes[(state.node_id, origin_seq, path_id)] = AlertRoute(state.node_id, hop, tried)
            decisions.append(ForwardDecision(Action.FORWARD, hop))
        else:
            logger.debug("node %d: alert %d path %d has no distinct first hop", state.node_id, origin_seq, path_id)
            decisions.append(ForwardDecision(Action.DEAD_END, reason="dead_end"))
    return decisions


def route_alert(state: RoutingState, packet: Packet, now: float, sink: int = 0,
                lifetime: float = INUSE_LIFETIME) -> ForwardDecision:
    """Decision of a node receiving an alert copy from packet.sender."""
    if state.node_id == sink:
        return ForwardDecision(Action.ACCEPT_AT_SINK)
    _expire(state, now)
    key = (packet.origin, packet.seq)
    if key in state.accepted_alert_seqs:
        return ForwardDecision(Action.REJECT_INUSE, packet.sender)
    if packet.ttl and packet.hops >= packet.ttl:
        return ForwardDecision(Action.DROP, reason="ttl")

    state.accepted_alert_seqs[key] = now + lifetime
    tried = {packet.sender, packet.origin, state.node_id}
    route = AlertRoute(packet.sender, None, tried)
    route_key = (packet.origin, packet.seq, packet.path_id)
    state.alert_routes[route_key] = route
    return _next_untried(state, route, route_key)


def handle_inuse(state: RoutingState, originator: int, seq: int, refuser: int, now: float) -> ForwardDecision:
    """Retry after a refusal; refusers stay excluded for this packet."""
    for (o, s, path_id), route in state.alert_routes.items():
        if o == originator and s == seq and route.next_hop == refuser:
            route.tried.add(refuser)
            return _next_untried(state, route, (originator, seq, path_id))
    return ForwardDecision(Action.DROP, reason="stale_inuse")


def _next_untried(state: RoutingState, route: AlertRoute, key: tuple[int, int, int]) -> ForwardDecision:
    preferred = state.preferred_neighbors(exclude=route.tried)
    if preferred:
        route.next_hop = preferred[0].neighbor_id
        route.tried.add(route.next_hop)
        return ForwardDecision(Action.FORWARD, route.next_hop)
    route.next_hop = None
    logger.debug("node %d: dead end for alert %d/%d path %d", state.node_id, *key)
    return ForwardDecision(Action.DEAD_END, reason="dead_end")


def handle_link_failure(state: RoutingState, originator: int, seq: int, next_hop: int, now: float) -> ForwardDecision:
    """Reroute a copy the MAC could not deliver to next_hop; no untried neighbor left is a dead end."""
    decision = handle_inuse(state, originator, seq, next_hop, now)
    if decision.action == Action.FORWARD:
        logger.debug("node %d: alert %d/%d rerouted around %d to %d", state.node_id, originator, seq, next_hop,
                     decision.next_hop)
    return decision
