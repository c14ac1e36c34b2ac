"""Golden agent module."""
from .agent import create_golden_graph
from .state import GoldenState

__all__ = ["create_golden_graph", "GoldenState"]
