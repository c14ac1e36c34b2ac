"""
Runner agent - executes the trials of one scenario and aggregates them.

load_scenario -> execute_trials -> aggregate
"""
import logging
from pathlib import Path
from typing import Literal

from langchain_core.messages import AIMessage
from langgraph.graph import StateGraph, START, END

from config import ScenarioConfig, ScenarioError, load_scenario
from metrics import MetricsError, TrialRecords, aggregate, density_summary, load_records, write_metrics
from simulation.batch import TrialJob, run_jobs
from .state import RunnerState

logger = logging.getLogger(__name__)


def scenario_from_state(state) -> ScenarioConfig:
    """Scenario file named by `target` with the command-line overrides applied."""
    options = state.get("options") or {}
    scenario = load_scenario(state["target"])
    return scenario.override(
        seed=options.get("seed"),
        trials=options.get("trials"),
        duration=options.get("duration"),
        routing=options.get("protocol"),
    )


def output_root(state, scenario: ScenarioConfig) -> Path:
    return Path(state.get("out_dir") or "out") / scenario.name


def load_scenario_node(state: RunnerState) -> RunnerState:
    try:
        scenario = scenario_from_state(state)
    except ScenarioError as exc:
        logger.error("%s", exc)
        return {"exit_code": 2, "messages": [AIMessage(content=f"Invalid scenario: {exc}")]}
    cfg = scenario.scenario
    seeds = [cfg.seed + i for i in range(cfg.trials)]
    note = (f"Loaded {cfg.name}: {scenario.topology.n_nodes} products, routing={cfg.routing}, "
            f"traffic={cfg.traffic}, {cfg.trials} trial(s) of {cfg.duration:g} s")
    logger.info(note)
    return {"scenario_name": cfg.name, "seeds": seeds, "messages": [AIMessage(content=note)]}


def route_after_load(state: RunnerState) -> Literal["execute_trials", "__end__"]:
    if state.get("exit_code"):
        return "__end__"
    return "execute_trials"


def execute_trials_node(state: RunnerState) -> RunnerState:
    scenario = scenario_from_state(state)
    root = output_root(state, scenario)
    workers = int((state.get("options") or {}).get("workers") or 1)
    jobs = [TrialJob(scenario, seed, root / str(seed)) for seed in state["seeds"]]
    outcomes = run_jobs(jobs, workers)

    failures = [f"seed {o.seed}: {o.error}" for o in outcomes if not o.ok]
    done = [str(o.directory) for o in outcomes if o.ok]
    violations = sum(o.disjointness_violations for o in outcomes)
    note = f"Ran {len(done)}/{len(jobs)} trial(s) into {root}"
    if violations:
        note += f"; {violations} alert(s) delivered over overlapping paths"
    if failures:
        note += "; failed: " + ", ".join(failures)
    logger.info(note)
    return {"trial_dirs": done, "failures": failures, "messages": [AIMessage(content=note)]}


def aggregate_node(state: RunnerState) -> RunnerState:
    scenario = scenario_from_state(state)
    cfg = scenario.scenario
    try:
        trials = [
            TrialRecords(cfg.routing, cfg.traffic, scenario.topology.n_nodes, int(Path(d).name),
                         load_records(Path(d) / "packets.csv"))
            for d in state.get("trial_dirs", [])
        ]
        rows = aggregate(trials)
    except MetricsError as exc:
        return {"exit_code": 1, "messages": [AIMessage(content=f"Aggregation failed: {exc}")]}
    path = write_metrics(rows, output_root(state, scenario) / "metrics.csv")
    summary = density_summary(rows).to_string() if rows else "no routed packets"
    return {
        "summary": summary,
        "exit_code": 1 if state.get("failures") else 0,
        "messages": [AIMessage(content=f"Wrote {len(rows)} metric row(s) to {path}")],
    }


def create_runner_graph():
    """
    Create the runner graph. Compile it at the top level.
    """
    workflow = StateGraph(RunnerState)
    workflow.add_node("load_scenario", load_scenario_node)
    workflow.add_node("execute_trials", execute_trials_node)
    workflow.add_node("aggregate", aggregate_node)

    workflow.add_edge(START, "load_scenario")
    workflow.add_conditional_edges(
        "load_scenario",
        route_after_load,
        {"execute_trials": "execute_trials", "__end__": END},
    )
    workflow.add_edge("execute_trials", "aggregate")
    workflow.add_edge("aggregate", END)
    return workflow
