"""
Deterministic event kernel.

simpy orders its heap by (time, priority, insertion id), so events at the
same timestamp fire in insertion order. EventQueue adds targeted one-shot
events with cancellation on top of a simpy Environment; node processes
(MAC, forwarding loops) run on the same environment.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import simpy


@dataclass
class ScheduledEvent:
    time: float
    seq: int
    target: Optional[int]
    payload: Any
    handler: Callable[["ScheduledEvent"], None] = field(repr=False)
    cancelled: bool = False

    def cancel(self) -> None:
        self.cancelled = True


class EventQueue:
    """Time-ordered queue of (timestamp, tie-break sequence, target, payload)."""

    def __init__(self, env: Optional[simpy.Environment] = None):
        self.env = env or simpy.Environment()
        self._seq = itertools.count()
        self.dispatched = 0

    @property
    def now(self) -> float:
        return float(self.env.now)

    def schedule(
        self,
        delay: float,
        handler: Callable[[ScheduledEvent], None],
        target: Optional[int] = None,
        payload: Any = None,
    ) -> ScheduledEvent:
        if delay < 0:
            raise ValueError(f"cannot schedule into the past (delay={delay})")
        event = ScheduledEvent(self.now + delay, next(self._seq), target, payload, handler)
        timeout = self.env.timeout(delay)
        timeout.callbacks.append(lambda _: self._dispatch(event))
        return event

    def schedule_at(self, when: float, handler, target=None, payload=None) -> ScheduledEvent:
        return self.schedule(max(0.0, when - self.now), handler, target, payload)

    def _dispatch(self, event: ScheduledEvent) -> None:
        if event.cancelled:
            return
        self.dispatched += 1
        event.handler(event)

    def process(self, generator) -> simpy.Process:
        return self.env.process(generator)

    def timeout(self, delay: float) -> simpy.Timeout:
        return self.env.timeout(delay)

    def run(self, until: float) -> None:
        self.env.run(until=until)
