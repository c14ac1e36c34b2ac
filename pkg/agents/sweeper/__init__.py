"""Sweeper agent module."""
from .agent import cell_name, create_sweeper_graph
from .state import SweeperState

__all__ = ["cell_name", "create_sweeper_graph", "SweeperState"]
