"""Supervisor module."""
from .agent import COMMANDS, create_supervisor_graph, route_to_agent, supervisor_node
from .state import SupervisorState

__all__ = ["COMMANDS", "create_supervisor_graph", "route_to_agent", "supervisor_node", "SupervisorState"]
