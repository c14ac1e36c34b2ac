"""
Sweeper agent - density x profile x protocol comparison.

plan_cells -> run_cells -> write_comparison
"""
import itertools
import logging
from pathlib import Path
from typing import Literal

from langchain_core.messages import AIMessage
from langgraph.graph import StateGraph, START, END

from agents.runner import output_root, scenario_from_state
from config import ScenarioError
from metrics import MetricsError, TrialRecords, aggregate, density_summary, load_records, write_metrics
from simulation.batch import TrialJob, run_jobs, trial_seeds
from .state import SweeperState

logger = logging.getLogger(__name__)


def cell_name(cell: dict) -> str:
    return f"{cell['protocol']}-{cell['profile']}-{cell['density']}"


def plan_cells_node(state: SweeperState) -> SweeperState:
    try:
        scenario = scenario_from_state(state)
    except ScenarioError as exc:
        return {"exit_code": 2, "messages": [AIMessage(content=f"Invalid scenario: {exc}")]}
    if scenario.sweep is None:
        return {"exit_code": 2, "messages": [AIMessage(content=f"{state['target']}: no [sweep] section")]}

    sweep = scenario.sweep
    protocol = (state.get("options") or {}).get("protocol")
    protocols = (protocol,) if protocol else sweep.protocols
    trials = scenario.scenario.trials
    cells = [
        {
            "density": density,
            "profile": profile,
            "protocol": proto,
            "seeds": trial_seeds(sweep.master_seed, density, trials),
        }
        for density, profile, proto in itertools.product(sweep.densities, sweep.profiles, protocols)
    ]
    note = (f"Planned {len(cells)} cell(s): densities={list(sweep.densities)}, profiles={list(sweep.profiles)}, "
            f"protocols={list(protocols)}, {trials} trial(s) each")
    logger.info(note)
    return {"cells": cells, "messages": [AIMessage(content=note)]}


def route_after_plan(state: SweeperState) -> Literal["run_cells", "__end__"]:
    if state.get("exit_code"):
        return "__end__"
    return "run_cells"


def run_cells_node(state: SweeperState) -> SweeperState:
    scenario = scenario_from_state(state)
    root = output_root(state, scenario)
    workers = int((state.get("options") or {}).get("workers") or 1)

    jobs, owners = [], []
    for index, cell in enumerate(state["cells"]):
        variant = scenario.override(n_nodes=cell["density"], traffic=cell["profile"], routing=cell["protocol"])
        for seed in cell["seeds"]:
            jobs.append(TrialJob(variant, seed, root / cell_name(cell) / str(seed)))
            owners.append(index)
    outcomes = run_jobs(jobs, workers)

    cells = [dict(cell, trial_dirs=[], errors=[]) for cell in state["cells"]]
    for index, outcome in zip(owners, outcomes):
        if outcome.ok:
            cells[index]["trial_dirs"].append(str(outcome.directory))
        else:
            cells[index]["errors"].append(f"seed {outcome.seed}: {outcome.error}")
    failed = [cell_name(c) for c in cells if c["errors"]]
    note = f"Ran {len(jobs)} trial(s) over {len(cells)} cell(s)"
    if failed:
        note += "; cells with failures: " + ", ".join(failed)
    logger.info(note)
    return {"cells": cells, "messages": [AIMessage(content=note)]}


def write_comparison_node(state: SweeperState) -> SweeperState:
    scenario = scenario_from_state(state)
    try:
        trials = [
            TrialRecords(cell["protocol"], cell["profile"], cell["density"], int(Path(d).name),
                         load_records(Path(d) / "packets.csv"))
            for cell in state["cells"]
            for d in cell["trial_dirs"]
        ]
        rows = aggregate(trials)
    except MetricsError as exc:
        return {"exit_code": 1, "messages": [AIMessage(content=f"Aggregation failed: {exc}")]}
    path = write_metrics(rows, output_root(state, scenario) / "metrics.csv")
    failed = sum(1 for cell in state["cells"] if cell["errors"])
    summary = density_summary(rows).to_string() if rows else "no routed packets"
    return {
        "summary": summary,
        "exit_code": 1 if failed else 0,
        "messages": [AIMessage(content=f"Wrote {len(rows)} metric row(s) to {path}; {failed} cell(s) failed")],
    }


def create_sweeper_graph():
    """
    Create the sweeper graph. Compile it at the top level.
    """
    workflow = StateGraph(SweeperState)
    workflow.add_node("plan_cells", plan_cells_node)
    workflow.add_node("run_cells", run_cells_node)
    workflow.add_node("write_comparison", write_comparison_node)

    workflow.add_edge(START, "plan_cells")
    workflow.add_conditional_edges(
        "plan_cells",
        route_after_plan,
        {"run_cells": "run_cells", "__end__": END},
    )
    workflow.add_edge("run_cells", "write_comparison")
    workflow.add_edge("write_comparison", END)
    return workflow
