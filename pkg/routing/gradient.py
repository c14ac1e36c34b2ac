"""
Gradient setup by HELLO flooding.

The sink starts a round with HELLO{HC=0, SA=sink}. A node without a
gradient (or with a worse one) adopts HC+1 and rebroadcasts; otherwise it
only records the sender in its neighbor table.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

logger = logging.getLogger(__name__)


@dataclass
class NeighborEntry:
    neighbor_id: int
    hc: int
    residual_energy: float = 0.0
    last_seen: float = 0.0


@dataclass(frozen=True)
class Hello:
    round: int
    hc: int
    sa: int


@dataclass
class AlertRoute:
    """Per (originator, seq, path) forwarding record kept for INUSE retries."""

    upstream: int
    next_hop: Optional[int]
    tried: set[int] = field(default_factory=set)


@dataclass
class RoutingState:
    node_id: int
    my_gradient: Optional[int] = None
    round: int = -1
    neighbors: dict[int, NeighborEntry] = field(default_factory=dict)
    # (originator, seq) -> expiry time
    accepted_alert_seqs: dict[tuple[int, int], float] = field(default_factory=dict)
    alert_routes: dict[tuple[int, int, int], AlertRoute] = field(default_factory=dict)

    @property
    def has_gradient(self) -> bool:
        return self.my_gradient is not None

    def upsert(self, neighbor: int, hc: int, now: float, energy: Optional[float] = None) -> NeighborEntry:
        entry = self.neighbors.get(neighbor)
        if entry is None:
            entry = NeighborEntry(neighbor, hc, energy or 0.0, now)
            self.neighbors[neighbor] = entry
        else:
            entry.hc = hc
            entry.last_seen = now
            if energy is not None:
                entry.residual_energy = energy
        return entry

    def preferred_neighbors(self, exclude: Iterable[int] = ()) -> list[NeighborEntry]:
        """Neighbors by ascending (hc, id)."""
        skip = set(exclude)
        return sorted(
            (e for e in self.neighbors.values() if e.neighbor_id not in skip),
            key=lambda e: (e.hc, e.neighbor_id),
        )


def start_gradient_round(state: RoutingState) -> Hello:
    """Sink side: open a new round and return the HELLO to broadcast at low power."""
    state.round += 1
    state.my_gradient = 0
    state.neighbors.clear()
    return Hello(round=state.round, hc=0, sa=state.node_id)


def handle_hello(state: RoutingState, hello: Hello, now: float = 0.0) -> tuple[RoutingState, Optional[Hello]]:
    """Record the sender and return the rebroadcast HELLO when the gradient improved."""
    if hello.round < state.round:
        return state, None
    if hello.round > state.round:
        state.round = hello.round
        if state.my_gradient != 0:
            state.my_gradient = None
        state.neighbors.clear()

    state.upsert(hello.sa, hello.hc, now)
    candidate = hello.hc + 1
    if state.my_gradient is None or candidate < state.my_gradient:
        state.my_gradient = candidate
        return state, Hello(round=hello.round, hc=candidate, sa=state.node_id)
    return state, None


def ideal_gradient_round(adjacency: Sequence[Sequence[int]], sink: int = 0) -> list[Optional[int]]:
    """Run one lossless HELLO flood over an adjacency list and return every gradient."""
    states = [RoutingState(node_id=i) for i in range(len(adjacency))]
    pending = deque([start_gradient_round(states[sink])])
    while pending:
        hello = pending.popleft()
        for receiver in adjacency[hello.sa]:
            _, rebroadcast = handle_hello(states[receiver], hello)
            if rebroadcast is not None:
                pending.append(rebroadcast)
    return [s.my_gradient for s in states]
