"""Scenario files: grammar, validation and serialization."""
from .grammar import ScenarioError, parse_document
from .scenario import (
    GOLDEN_SCENARIOS,
    ProductSection,
    ScenarioConfig,
    SweepSection,
    dump_scenario,
    load_scenario,
    parse_scenario,
)

__all__ = [
    "ScenarioError",
    "parse_document",
    "GOLDEN_SCENARIOS",
    "ProductSection",
    "ScenarioConfig",
    "SweepSection",
    "dump_scenario",
    "load_scenario",
    "parse_scenario",
]
