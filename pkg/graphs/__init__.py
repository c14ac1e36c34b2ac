"""
Graph exports for LangGraph Studio.
"""
from .experiment_system import create_experiment_workflow, graph as experiment_system

__all__ = ["create_experiment_workflow", "experiment_system"]
