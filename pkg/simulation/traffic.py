"""Benchmark traffic profiles."""
from __future__ import annotations

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field


class TrafficMode(str, Enum):
    NOT_CONGESTED = "not-congested"
    CONGESTED = "congested"

    def __str__(self) -> str:
        return self.value


class TrafficProfile(BaseModel):
    """Routine rate per node, alert rate per alert source, number of alert sources (pkt/s)."""

    model_config = ConfigDict(frozen=True)

    mode: TrafficMode
    routine_rate: float = Field(ge=0)
    alert_rate: float = Field(ge=0)
    alert_sources: int = Field(ge=0)

    @classmethod
    def named(cls, mode: "TrafficMode | str") -> "TrafficProfile":
        return PROFILES[TrafficMode(mode)]


PROFILES: dict[TrafficMode, TrafficProfile] = {
    TrafficMode.NOT_CONGESTED: TrafficProfile(
        mode=TrafficMode.NOT_CONGESTED, routine_rate=0.2, alert_rate=1.0, alert_sources=2
    ),
    TrafficMode.CONGESTED: TrafficProfile(
        mode=TrafficMode.CONGESTED, routine_rate=1.0, alert_rate=5.0, alert_sources=4
    ),
}
