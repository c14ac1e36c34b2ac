"""
Node energy accounting.

Each node owns a Radio whose state occupancy is debited from an
EnergyLedger at every state change: energy = current * duration * voltage.
"""
from __future__ import annotations

import logging
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)


class RadioState(str, Enum):
    SLEEP = "sleep"
    IDLE = "idle"
    RX = "rx"
    TX = "tx"


class EnergyModel(BaseModel):
    """TelosB-class figures: 2 x AA supply, CC2420-like tx/rx draws."""

    model_config = ConfigDict(frozen=True)

    initial_energy: float = Field(default=18720.0, gt=0)
    voltage: float = Field(default=3.0, gt=0)
    active_current: float = 1.8e-3
    sleep_current: float = 5.1e-6
    tx_current: float = 17.4e-3
    rx_current: float = 19.7e-3

    def current(self, state: RadioState) -> float:
        return {
            RadioState.SLEEP: self.sleep_current,
            RadioState.IDLE: self.active_current,
            RadioState.RX: self.rx_current,
            RadioState.TX: self.tx_current,
        }[state]


class EnergyLedger:
    """Remaining joules plus the time spent in each radio state."""

    def __init__(self, model: EnergyModel, unlimited: bool = False):
        self.model = model
        self.unlimited = unlimited
        self.remaining = model.initial_energy
        self.consumed = 0.0
        self.occupancy: dict[RadioState, float] = {state: 0.0 for state in RadioState}

    @property
    def depleted(self) -> bool:
        return not self.unlimited and self.remaining <= 0.0

    def cost(self, state: RadioState, duration: float) -> float:
        return self.model.current(state) * duration * self.model.voltage

    def debit(self, state: RadioState, duration: float) -> float:
        if duration <= 0:
            return 0.0
        energy = self.cost(state, duration)
        if not self.unlimited:
            energy = min(energy, self.remaining)
            self.remaining -= energy
        self.consumed += energy
        self.occupancy[state] += duration
        return energy

    def expected_consumption(self) -> float:
        """Energy implied by the recorded state occupancy."""
        return sum(self.cost(state, duration) for state, duration in self.occupancy.items())


class Radio:
    """Radio state machine that charges the ledger on every transition."""

    def __init__(self, ledger: EnergyLedger, now: float = 0.0, state: RadioState = RadioState.IDLE):
        self.ledger = ledger
        self.state = state
        self.since = now

    def set_state(self, state: RadioState, now: float) -> None:
        self.ledger.debit(self.state, now - self.since)
        self.state = state
        self.since = now

    def residual(self, now: float) -> float:
        if self.ledger.unlimited:
            return float("inf")
        return max(0.0, self.ledger.remaining - self.ledger.cost(self.state, now - self.since))

    def settle(self, now: float) -> None:
        self.set_state(self.state, now)
