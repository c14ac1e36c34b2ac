"""
Validator agent - parses and validates a scenario file without running it.
"""
from langchain_core.messages import AIMessage
from langgraph.graph import StateGraph, START, END

from config import ScenarioError, load_scenario
from .state import ValidatorState


def validate_node(state: ValidatorState) -> ValidatorState:
    path = state["target"]
    try:
        scenario = load_scenario(path)
    except ScenarioError as exc:
        return {"exit_code": 2, "messages": [AIMessage(content=str(exc))]}
    cfg = scenario.scenario
    parts = [
        f"{path}: valid",
        f"scenario {cfg.name}, {scenario.topology.n_nodes} products ({len(scenario.products)} configured)",
        f"routing={cfg.routing}, traffic={cfg.traffic}, {cfg.trials} trial(s) of {cfg.duration:g} s",
    ]
    if scenario.matrix_path is not None:
        parts.append(f"matrix {scenario.matrix_path}: {len(scenario.matrix.symbols)} symbols, "
                     f"{len(scenario.matrix.incompatible_pairs())} incompatible pairs")
    if scenario.sweep is not None:
        sweep = scenario.sweep
        parts.append(f"sweep: {len(sweep.densities) * len(sweep.profiles) * len(sweep.protocols)} cells")
    return {"exit_code": 0, "messages": [AIMessage(content="\n".join(parts))]}


def create_validator_graph():
    """
    Create the validator graph. Compile it at the top level.
    """
    workflow = StateGraph(ValidatorState)
    workflow.add_node("validate", validate_node)
    workflow.add_edge(START, "validate")
    workflow.add_edge("validate", END)
    return workflow
