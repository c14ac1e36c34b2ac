"""
run and sweep commands end to end on desk-sized scenarios.
"""
import pandas as pd
import pytest
from langchain_core.messages import HumanMessage

from graphs.experiment_system import create_experiment_workflow
from metrics import METRIC_COLUMNS
from simulation.batch import trial_seeds
from utils.checkpointer import get_memory_saver, thread_config

SMALL = """
[scenario]
name = small
duration = 40
traffic = not-congested
traffic_start = 5

[topology]
n_nodes = 15
area = 90, 90

[routing]
gradient_start = 1.5
"""

SWEEP = SMALL.replace("name = small", "name = tiny-sweep\napplication = false") + """
[sweep]
densities = 10, 15
profiles = not-congested
protocols = ours, rrr
master_seed = 11
"""


@pytest.fixture
def invoke():
    graph = create_experiment_workflow().compile(checkpointer=get_memory_saver())

    def _invoke(command, target, out_dir, **options):
        return graph.invoke(
            {
                "messages": [HumanMessage(content=f"{command} {target}")],
                "command": command,
                "target": str(target),
                "options": options,
                "out_dir": str(out_dir),
                "exit_code": 0,
            },
            config=thread_config(),
        )

    return _invoke


def test_run_writes_traces_packets_and_metrics(invoke, tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    result = invoke("run", cfg, tmp_path / "out", seed=5, trials=2)
    assert result["exit_code"] == 0, result["messages"][-1].content
    root = tmp_path / "out" / "small"
    for seed in (5, 6):
        assert (root / str(seed) / "trace.log").exists()
        assert (root / str(seed) / "packets.csv").exists()
    metrics = pd.read_csv(root / "metrics.csv")
    assert list(metrics.columns) == METRIC_COLUMNS
    assert set(metrics["n_trials"]) <= {1, 2}
    assert result["summary"]


def test_invalid_run_leaves_no_outputs(invoke, tmp_path):
    cfg = tmp_path / "broken.cfg"
    cfg.write_text("[scenario]\nname = broken\n[matrix]\npath = nowhere.txt\n")
    result = invoke("run", cfg, tmp_path / "out")
    assert result["exit_code"] == 2
    assert f"{cfg}:4:" in result["messages"][-1].content
    assert not (tmp_path / "out").exists()


def test_sweep_covers_every_cell(invoke, tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(SWEEP)
    result = invoke("sweep", cfg, tmp_path / "out")
    assert result["exit_code"] == 0, result["messages"][-1].content
    root = tmp_path / "out" / "tiny-sweep"
    for protocol in ("ours", "rrr"):
        for density in (10, 15):
            (seed,) = trial_seeds(11, density, 1)
            assert (root / f"{protocol}-not-congested-{density}" / str(seed) / "packets.csv").exists()
    metrics = pd.read_csv(root / "metrics.csv")
    assert set(metrics["protocol"]) == {"ours", "rrr"}
    assert set(metrics["density"]) == {10, 15}


def test_sweep_is_repeatable(invoke, tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(SWEEP)
    invoke("sweep", cfg, tmp_path / "a")
    invoke("sweep", cfg, tmp_path / "b")
    first = (tmp_path / "a" / "tiny-sweep" / "metrics.csv").read_text()
    second = (tmp_path / "b" / "tiny-sweep" / "metrics.csv").read_text()
    assert first == second


def test_protocol_flag_narrows_sweep(invoke, tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(SWEEP.replace("densities = 10, 15", "densities = 10"))
    result = invoke("sweep", cfg, tmp_path / "out", protocol="rrr")
    assert result["exit_code"] == 0
    assert "protocols=['rrr']" in result["messages"][2].content


def test_sweep_needs_sweep_section(invoke, tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    result = invoke("sweep", cfg, tmp_path / "out")
    assert result["exit_code"] == 2
    assert "no [sweep] section" in result["messages"][-1].content
