"""
Trial batches: run many (scenario, seed) jobs, optionally in a process
pool, each writing its artifacts to its own directory.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from simulation.trial import run_trial

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrialJob:
    scenario: object  # ScenarioConfig
    seed: int
    directory: Path


@dataclass(frozen=True)
class TrialOutcome:
    seed: int
    directory: Path
    packets: int = 0
    unresolved: int = 0
    disjointness_violations: int = 0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def trial_seeds(master_seed: int, key: int, trials: int) -> list[int]:
    """Seeds for one sweep cell; every protocol and profile at a density shares them."""
    return [int(s) for s in np.random.SeedSequence([master_seed, key]).generate_state(trials)]


def execute_job(job: TrialJob) -> TrialOutcome:
    try:
        result = run_trial(job.scenario, job.seed)
        result.write(job.directory)
    except Exception as exc:  # reported per trial, the batch goes on
        logger.exception("trial seed=%d failed", job.seed)
        return TrialOutcome(job.seed, job.directory, error=f"{type(exc).__name__}: {exc}")
    return TrialOutcome(
        seed=job.seed,
        directory=job.directory,
        packets=len(result.ledger),
        unresolved=result.unresolved,
        disjointness_violations=len(result.disjointness_violations()),
    )


def run_jobs(jobs: list[TrialJob], workers: int = 1) -> list[TrialOutcome]:
    """Execute jobs; outcomes come back in job order whatever the worker count."""
    if workers <= 1 or len(jobs) <= 1:
        return [execute_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(execute_job, jobs))
