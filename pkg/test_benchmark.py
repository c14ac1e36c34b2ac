"""
Protocol comparison on a reduced congested warehouse.

Both protocols run on the same seeds; the orderings are the ones the full
desk sweep reports, checked on pooled trials of a smaller floor.
"""
import math

import pytest

from config.scenario import parse_scenario
from metrics import TrialRecords, aggregate
from simulation.batch import trial_seeds
from simulation.trial import run_trial

BENCH = """
[scenario]
name = bench
duration = 30
traffic = congested
traffic_start = 5
application = false
routing = {protocol}

[topology]
n_nodes = {density}
area = 150, 150

[routing]
gradient_start = 1.5
"""

SEEDS = trial_seeds(2024, 40, 3)


def run_cell(protocol, density, seeds):
    scenario = parse_scenario(BENCH.format(protocol=protocol, density=density))
    return [run_trial(scenario, seed) for seed in seeds]


def pooled(results):
    trials = [TrialRecords(r.protocol, r.profile, r.density, index, r.packet_frame())
              for index, r in enumerate(results)]
    return {row.packet_class: row for row in aggregate(trials)}


def standard_error(row):
    return row.delay_std_s / math.sqrt(row.n_trials) if row.n_trials > 1 else 0.0


@pytest.fixture(scope="module")
def ours():
    return run_cell("ours", 40, SEEDS)


@pytest.fixture(scope="module")
def rrr():
    return run_cell("rrr", 40, SEEDS)


def test_multipath_loses_fewer_alerts(ours, rrr):
    assert pooled(ours)["alert"].loss_ratio < pooled(rrr)["alert"].loss_ratio


def test_multipath_alerts_are_not_slower(ours, rrr):
    assert pooled(ours)["alert"].mean_delay_s <= pooled(rrr)["alert"].mean_delay_s


def test_gathering_makes_routine_slower_than_rrr(ours, rrr):
    assert pooled(rrr)["routine"].mean_delay_s <= pooled(ours)["routine"].mean_delay_s


def test_alerts_fare_better_than_routine(ours):
    rows = pooled(ours)
    assert rows["alert"].loss_ratio < rows["routine"].loss_ratio


def test_congested_trials_keep_copies_disjoint_and_energy_balanced(ours):
    for result in ours:
        assert result.disjointness_violations() == []
        assert result.energy_conservation_error() < 1e-9


def test_routine_delay_grows_with_density(ours):
    # 40 nodes reuses the comparison cell
    cells = {20: run_cell("ours", 20, SEEDS[:2]), 40: ours[:2], 60: run_cell("ours", 60, SEEDS[:2])}
    rows = {density: pooled(results)["routine"] for density, results in cells.items()}
    for low, high in [(20, 40), (40, 60)]:
        tolerance = max(standard_error(rows[low]), standard_error(rows[high]))
        assert rows[high].mean_delay_s >= rows[low].mean_delay_s - tolerance
