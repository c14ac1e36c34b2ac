"""
Golden-trace scenarios.

Each scripted scenario lives in scenarios/<name>.cfg; its expected event
order in golden/<name>*.expected, one `node=<id> EVENT key=value` line per
event. The check is an ordered subsequence match without timestamps, so
any seed must pass.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from config.scenario import GOLDEN_SCENARIOS, load_scenario
from simulation.trace import trace_subsequence
from simulation.trial import TrialResult, run_trial

logger = logging.getLogger(__name__)

ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = ROOT / "scenarios"
GOLDEN_DIR = ROOT / "golden"


class GoldenError(Exception):
    """Unknown golden scenario or missing expectation file."""


@dataclass
class ExpectationCheck:
    path: Path
    expected: list[str]
    matched: int

    @property
    def passed(self) -> bool:
        return self.matched == len(self.expected)

    @property
    def divergence(self) -> Optional[str]:
        return None if self.passed else self.expected[self.matched]


@dataclass
class GoldenReport:
    name: str
    seed: int
    checks: list[ExpectationCheck] = field(default_factory=list)
    result: Optional[TrialResult] = None

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def describe(self) -> str:
        lines = []
        for check in self.checks:
            status = "ok" if check.passed else "FAILED"
            lines.append(f"{check.path.name}: {status} ({check.matched}/{len(check.expected)} events)")
            if not check.passed:
                lines.append(f"  first missing event: {check.divergence}")
        return "\n".join(lines)


def read_expected(path: Path) -> list[str]:
    lines = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return lines


def expectation_files(name: str, golden_dir: Path = GOLDEN_DIR) -> list[Path]:
    files = sorted(golden_dir.glob(f"{name}*.expected"))
    # registration.expected, registration-ncf2.expected, ... but not another scenario's prefix
    return [p for p in files if p.stem == name or p.stem.startswith(f"{name}-")]


def check_golden(name: str, seed: Optional[int] = None, scenario_dir: Path = SCENARIO_DIR,
                 golden_dir: Path = GOLDEN_DIR) -> GoldenReport:
    if name not in GOLDEN_SCENARIOS:
        raise GoldenError(f"unknown golden scenario {name!r}; expected one of {', '.join(GOLDEN_SCENARIOS)}")
    files = expectation_files(name, golden_dir)
    if not files:
        raise GoldenError(f"no expectation file for {name!r} in {golden_dir}")
    scenario = load_scenario(scenario_dir / f"{name}.cfg")
    if seed is not None:
        scenario = scenario.override(seed=seed)
    seed = scenario.scenario.seed
    result = run_trial(scenario, seed)
    report = GoldenReport(name, seed, result=result)
    for path in files:
        expected = read_expected(path)
        _, matched = trace_subsequence(result.trace.lines, expected)
        report.checks.append(ExpectationCheck(path, expected, matched))
    logger.info("golden %s seed=%d: %s", name, seed, "pass" if report.passed else "FAIL")
    return report
