"""Network layer: gradient setup, alert multipath, routine energy-aware routing and the RRR baseline."""
from .packets import Packet, PacketClass, PacketKind, Scope
from .gradient import Hello, NeighborEntry, RoutingState, handle_hello, ideal_gradient_round, start_gradient_round
from .alert import Action, ForwardDecision, handle_inuse, originate_alert, route_alert
from .routine import InfoResponse, reconcile_neighbors, route_routine, select_next_hop
from .rrr import AlertRateEstimator, RrrState, rrr_route

__all__ = [
    "Packet",
    "PacketClass",
    "PacketKind",
    "Scope",
    "Hello",
    "NeighborEntry",
    "RoutingState",
    "handle_hello",
    "ideal_gradient_round",
    "start_gradient_round",
    "Action",
    "ForwardDecision",
    "handle_inuse",
    "originate_alert",
    "route_alert",
    "InfoResponse",
    "reconcile_neighbors",
    "route_routine",
    "select_next_hop",
    "AlertRateEstimator",
    "RrrState",
    "rrr_route",
]
