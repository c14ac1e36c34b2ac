"""
State definition for the Golden agent.
"""
from typing import Annotated, Any
from typing_extensions import TypedDict
from langgraph.graph.message import add_messages
from langchain_core.messages import BaseMessage


class GoldenState(TypedDict, total=False):
    """
    Golden scenario name in `target`; per-expectation results out.
    """
    messages: Annotated[list[BaseMessage], add_messages]
    target: str
    options: dict[str, Any]
    out_dir: str
    exit_code: int
    checks: list[dict[str, Any]]
    trace_path: str
