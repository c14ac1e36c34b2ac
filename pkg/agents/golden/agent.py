"""
Golden agent - runs a scripted scenario and checks its event order.
"""
import logging
from pathlib import Path
from typing import Literal

from langchain_core.messages import AIMessage
from langgraph.graph import StateGraph, START, END

from config import ScenarioError
from simulation.golden import GoldenError, check_golden
from .state import GoldenState

logger = logging.getLogger(__name__)


def run_golden_node(state: GoldenState) -> GoldenState:
    name = state["target"]
    seed = (state.get("options") or {}).get("seed")
    try:
        report = check_golden(name, seed)
    except (GoldenError, ScenarioError) as exc:
        return {"exit_code": 2, "messages": [AIMessage(content=str(exc))]}

    directory = Path(state.get("out_dir") or "out") / "golden" / name / str(report.seed)
    report.result.write(directory)
    checks = [
        {"file": c.path.name, "matched": c.matched, "expected": len(c.expected), "divergence": c.divergence}
        for c in report.checks
    ]
    return {
        "checks": checks,
        "trace_path": str(directory / "trace.log"),
        "messages": [AIMessage(content=f"Ran golden scenario {name} with seed {report.seed}")],
    }


def route_after_run(state: GoldenState) -> Literal["report", "__end__"]:
    if state.get("exit_code"):
        return "__end__"
    return "report"


def report_node(state: GoldenState) -> GoldenState:
    lines, failed = [], 0
    for check in state["checks"]:
        if check["divergence"] is None:
            lines.append(f"{check['file']}: pass ({check['expected']} events)")
        else:
            failed += 1
            lines.append(f"{check['file']}: FAIL after {check['matched']}/{check['expected']} events; "
                         f"first missing: {check['divergence']}")
    lines.append(f"trace: {state['trace_path']}")
    return {"exit_code": 1 if failed else 0, "messages": [AIMessage(content="\n".join(lines))]}


def create_golden_graph():
    """
    Create the golden-trace graph. Compile it at the top level.
    """
    workflow = StateGraph(GoldenState)
    workflow.add_node("run_golden", run_golden_node)
    workflow.add_node("report", report_node)

    workflow.add_edge(START, "run_golden")
    workflow.add_conditional_edges(
        "run_golden",
        route_after_run,
        {"report": "report", "__end__": END},
    )
    workflow.add_edge("report", END)
    return workflow
