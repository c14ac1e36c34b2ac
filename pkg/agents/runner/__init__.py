"""Runner agent module."""
from .agent import create_runner_graph, output_root, scenario_from_state
from .state import RunnerState

__all__ = ["create_runner_graph", "output_root", "scenario_from_state", "RunnerState"]
