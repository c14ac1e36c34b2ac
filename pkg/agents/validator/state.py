"""
State definition for the Validator agent.
"""
from typing import Annotated
from typing_extensions import TypedDict
from langgraph.graph.message import add_messages
from langchain_core.messages import BaseMessage


class ValidatorState(TypedDict, total=False):
    messages: Annotated[list[BaseMessage], add_messages]
    target: str
    exit_code: int
