"""
Supervisor - routes a command to the agent that executes it.
"""
from typing import Literal

from langchain_core.messages import AIMessage
from langgraph.graph import StateGraph, START, END

from .state import SupervisorState

COMMANDS = {
    "run": "runner",
    "sweep": "sweeper",
    "golden": "golden",
    "validate": "validator",
}


def supervisor_node(state: SupervisorState) -> SupervisorState:
    """
    Pick the agent for the requested command.
    """
    command = state.get("command", "")
    next_agent = COMMANDS.get(command, "finish")
    if next_agent == "finish":
        return {
            "next": "finish",
            "exit_code": 2,
            "messages": [AIMessage(content=f"Unknown command {command!r}; expected one of {', '.join(COMMANDS)}")],
        }
    return {
        "next": next_agent,
        "messages": [AIMessage(content=f"Routing to: {next_agent}")],
    }


def route_to_agent(state: SupervisorState) -> Literal["runner", "sweeper", "golden", "validator", "__end__"]:
    """
    Conditional edge function to route to the selected agent.
    """
    if state["next"] == "finish":
        return "__end__"
    return state["next"]


def create_supervisor_graph():
    """
    Create the supervisor graph with routing logic only.
    """
    workflow = StateGraph(SupervisorState)
    workflow.add_node("supervisor", supervisor_node)
    workflow.add_edge(START, "supervisor")
    workflow.add_conditional_edges(
        "supervisor",
        route_to_agent,
        {
            "runner": END,
            "sweeper": END,
            "golden": END,
            "validator": END,
            "__end__": END,
        },
    )
    return workflow
