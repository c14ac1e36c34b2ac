"""
State definition for the Runner agent.
"""
from typing import Annotated, Any
from typing_extensions import TypedDict
from langgraph.graph.message import add_messages
from langchain_core.messages import BaseMessage


class RunnerState(TypedDict, total=False):
    """
    Scenario path and overrides in, trial directories and metrics out.
    """
    messages: Annotated[list[BaseMessage], add_messages]
    target: str
    options: dict[str, Any]
    out_dir: str
    exit_code: int
    scenario_name: str
    seeds: list[int]
    trial_dirs: list[str]
    failures: list[str]
    summary: str
