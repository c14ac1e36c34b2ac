"""
State definition for the Sweeper agent.
"""
from typing import Annotated, Any
from typing_extensions import TypedDict
from langgraph.graph.message import add_messages
from langchain_core.messages import BaseMessage


class SweeperState(TypedDict, total=False):
    """
    One cell per (density, profile, protocol); cells carry their trial seeds
    and, after running, their trial directories and errors.
    """
    messages: Annotated[list[BaseMessage], add_messages]
    target: str
    options: dict[str, Any]
    out_dir: str
    exit_code: int
    cells: list[dict[str, Any]]
    summary: str
