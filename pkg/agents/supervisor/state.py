"""
State definition for the Supervisor.
"""
from typing import Annotated, Any
from typing_extensions import TypedDict
from langgraph.graph.message import add_messages
from langchain_core.messages import BaseMessage


class SupervisorState(TypedDict, total=False):
    """
    Shared state of the experiment system.
    `command` selects the agent, `target` is a scenario path or golden name.
    """
    messages: Annotated[list[BaseMessage], add_messages]
    next: str  # Which agent to route to next
    command: str
    target: str
    options: dict[str, Any]  # seed, trials, duration, protocol, workers
    out_dir: str
    exit_code: int
    summary: str  # per-density table after run / sweep
