"""Straight-line waypoint mobility."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class MobilityPlan:
    """Start position, waypoints visited in order, speed (m/s) and departure time."""

    start: tuple[float, float]
    waypoints: tuple[tuple[float, float], ...] = field(default_factory=tuple)
    speed: float = 1.0
    depart: float = 0.0

    @property
    def is_static(self) -> bool:
        return not self.waypoints or self.speed <= 0

    def position_at(self, t: float) -> tuple[float, float]:
        if self.is_static or t <= self.depart:
            return self.start
        travelled = (t - self.depart) * self.speed
        here = np.asarray(self.start, dtype=float)
        for waypoint in self.waypoints:
            target = np.asarray(waypoint, dtype=float)
            leg = float(np.hypot(*(target - here)))
            if travelled <= leg:
                if leg == 0:
                    return tuple(target)
                point = here + (target - here) * (travelled / leg)
                return (float(point[0]), float(point[1]))
            travelled -= leg
            here = target
        return (float(here[0]), float(here[1]))

    def arrival_time(self) -> float:
        points = np.asarray((self.start,) + tuple(self.waypoints), dtype=float)
        length = float(np.hypot(*np.diff(points, axis=0).T).sum()) if len(points) > 1 else 0.0
        return self.depart + (length / self.speed if self.speed > 0 else 0.0)


def move_mobile_nodes(positions: np.ndarray, plans: dict[int, MobilityPlan], now: float) -> np.ndarray:
    """New position array with every mobile node advanced to `now`."""
    updated = np.array(positions, dtype=float, copy=True)
    for node, plan in plans.items():
        if not plan.is_static:
            updated[node] = plan.position_at(now)
    return updated


def mobile_nodes(plans: dict[int, MobilityPlan]) -> Sequence[int]:
    return sorted(n for n, p in plans.items() if not p.is_static)
