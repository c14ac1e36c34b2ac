"""Inputs of the product and sink step functions."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from protocol.messages import Message


class Timer(str, Enum):
    RETRANSMIT = "retransmit"
    GRE = "gre"
    ALE_RETRY = "ale_retry"


@dataclass(frozen=True)
class MessageReceived:
    message: Message
    rssi: Optional[float] = None


@dataclass(frozen=True)
class TimerFired:
    timer: Timer


@dataclass(frozen=True)
class SensorSample:
    value: float


OPERATOR_ACTIONS = ("query-config", "query-rules", "query-ambient", "reset")


@dataclass(frozen=True)
class OperatorCommand:
    action: str
    target: int

    def __post_init__(self):
        if self.action not in OPERATOR_ACTIONS:
            raise ValueError(f"unknown operator action {self.action!r}; expected one of {OPERATOR_ACTIONS}")


ProductEvent = Union[MessageReceived, TimerFired, SensorSample]
SinkEvent = Union[MessageReceived, OperatorCommand]
