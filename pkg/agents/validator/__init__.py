"""Validator agent module."""
from .agent import create_validator_graph
from .state import ValidatorState

__all__ = ["create_validator_graph", "ValidatorState"]
