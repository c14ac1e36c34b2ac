"""
Experiment System Graph for LangGraph Studio.

Composes the agents (supervisor, runner, sweeper, golden, validator) into
one graph: the supervisor routes the command, the selected agent runs it.

CHECKPOINTER USAGE:
This file is loaded by `langgraph dev` (LangGraph Studio), which provides
its own persistence, so `graph` is compiled WITHOUT a checkpointer.
main.py compiles `create_experiment_workflow()` WITH one.
"""
from typing import Literal
from langgraph.graph import StateGraph, START, END

from agents.golden import create_golden_graph
from agents.runner import create_runner_graph
from agents.supervisor import SupervisorState, create_supervisor_graph
from agents.sweeper import create_sweeper_graph
from agents.validator import create_validator_graph

AGENTS = ("runner", "sweeper", "golden", "validator")


def route_supervisor(state: SupervisorState) -> Literal["runner", "sweeper", "golden", "validator", "__end__"]:
    """
    Route based on the supervisor's decision.
    """
    next_choice = state.get("next", "").lower()
    if next_choice in AGENTS:
        return next_choice
    return "__end__"


def create_experiment_workflow() -> StateGraph:
    """
    Parent workflow with every agent compiled as a subgraph (uncompiled parent).
    """
    workflow = StateGraph(SupervisorState)
    workflow.add_node("supervisor", create_supervisor_graph().compile())
    workflow.add_node("runner", create_runner_graph().compile())
    workflow.add_node("sweeper", create_sweeper_graph().compile())
    workflow.add_node("golden", create_golden_graph().compile())
    workflow.add_node("validator", create_validator_graph().compile())

    workflow.add_edge(START, "supervisor")
    workflow.add_conditional_edges(
        "supervisor",
        route_supervisor,
        {name: name for name in AGENTS} | {"__end__": END},
    )
    for name in AGENTS:
        workflow.add_edge(name, END)
    return workflow


# NO CHECKPOINTER - LangGraph Studio provides its own persistence
graph = create_experiment_workflow().compile()

__all__ = ["graph", "create_experiment_workflow"]
