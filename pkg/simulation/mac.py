"""
Unslotted CSMA/CA abstraction.

Each node owns a class-priority queue (Alert, NetControl, Routine; FIFO
within a class) drained by one simpy process. Before every attempt the
node waits a random number of backoff units drawn from [0, 2^BE - 1],
then performs CCA. A busy channel grows BE up to maxBE; more than
max_backoffs busy assessments drop the frame. Alert frames contend with
their own, narrower exponent range, the way prioritised access categories
get a smaller contention window, and a lower-class frame still backing off
goes back to the queue when an alert arrives. Unicast frames not received by their
destination are retried up to max_frame_retries times unless the caller
asked for fewer.
"""
from __future__ import annotations

import itertools
import logging
from typing import Callable, Optional

import numpy as np
import simpy
from pydantic import BaseModel, ConfigDict, Field, model_validator

from simulation.channel import Frame, Medium
from simulation.kernel import EventQueue

logger = logging.getLogger(__name__)

ALERT_RANK = 0


class MacConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    unit_backoff: float = Field(default=320e-6, gt=0)
    min_be: int = Field(default=3, ge=0)
    max_be: int = Field(default=5, ge=0)
    alert_min_be: int = Field(default=2, ge=0)
    alert_max_be: int = Field(default=4, ge=0)
    max_backoffs: int = Field(default=4, ge=0)
    cca_time: float = Field(default=128e-6, ge=0)
    turnaround: float = Field(default=192e-6, ge=0)
    queue_capacity: int = Field(default=32, ge=1)
    max_frame_retries: int = Field(default=3, ge=0)

    @model_validator(mode="after")
    def _ordered_exponents(self):
        if self.min_be > self.max_be or self.alert_min_be > self.alert_max_be:
            raise ValueError("backoff exponent range is empty")
        return self

    def exponents(self, rank: int) -> tuple[int, int]:
        if rank == ALERT_RANK:
            return self.alert_min_be, self.alert_max_be
        return self.min_be, self.max_be


DropHandler = Callable[[Frame, str], None]
DoneHandler = Callable[[Frame, bool], None]


class CsmaMac:
    """MAC entity of one node."""

    def __init__(
        self,
        node_id: int,
        queue: EventQueue,
        medium: Medium,
        rng: np.random.Generator,
        config: MacConfig = MacConfig(),
        on_drop: Optional[DropHandler] = None,
        on_done: Optional[DoneHandler] = None,
        alive: Callable[[], bool] = lambda: True,
    ):
        self.node_id = node_id
        self.queue = queue
        self.medium = medium
        self.rng = rng
        self.config = config
        self.on_drop = on_drop or (lambda frame, cause: None)
        self.on_done = on_done or (lambda frame, delivered: None)
        self.alive = alive
        self.store = simpy.PriorityStore(queue.env)
        self._order = itertools.count()
        self._delivered = False
        self.sent = 0
        self.drops: dict[str, int] = {}
        self.backoff_log: list[tuple[float, float]] = []
        self.preemptions = 0
        queue.process(self._serve())

    @property
    def backlog(self) -> int:
        return len(self.store.items)

    def send(self, frame: Frame, rank: int, retries: Optional[int] = None) -> bool:
        """Queue a frame; False when the queue overflowed and the frame was dropped.

        ``retries`` caps the unicast retransmissions of this frame below the
        configured maximum (0 sends it once).
        """
        if self.backlog >= self.config.queue_capacity:
            self._drop(frame, "queue_overflow")
            return False
        budget = self.config.max_frame_retries if retries is None else min(retries, self.config.max_frame_retries)
        self.store.put(simpy.PriorityItem((rank, next(self._order)), (frame, rank, budget)))
        return True

    def _outranked(self, rank: int) -> bool:
        return bool(self.store.items) and self.store.items[0].priority[0] < rank

    def tx_done(self, frame: Frame, delivered: bool) -> None:
        self._delivered = delivered

    def _drop(self, frame: Frame, cause: str) -> None:
        self.drops[cause] = self.drops.get(cause, 0) + 1
        logger.debug("node %d: MAC drop (%s)", self.node_id, cause)
        self.on_drop(frame, cause)

    def _serve(self):
        while True:
            item = yield self.store.get()
            frame, rank, retries = item.item
            remaining = yield from self._deliver(frame, rank, retries)
            if remaining is not None:
                # back in line at its old position, keeping the unused retries
                self.store.put(simpy.PriorityItem(item.priority, (frame, rank, remaining)))

    def _deliver(self, frame: Frame, rank: int, retries: int):
        cfg = self.config
        min_be, max_be = cfg.exponents(rank)
        for attempt in range(retries + 1):
            backoffs, be = 0, min_be
            while True:
                delay = int(self.rng.integers(0, 2 ** be)) * cfg.unit_backoff
                yield self.queue.timeout(delay)
                self.backoff_log.append((self.queue.now, delay))
                if not self.alive():
                    self._drop(frame, "energy")
                    return
                if self._outranked(rank):
                    self.preemptions += 1
                    return retries - attempt
                yield self.queue.timeout(cfg.cca_time)
                if self.medium.channel_clear(self.node_id):
                    break
                backoffs += 1
                be = min(be + 1, max_be)
                if backoffs > cfg.max_backoffs:
                    self._drop(frame, "mac_backoff")
                    return
            yield self.queue.timeout(cfg.turnaround)
            if not self.alive():
                self._drop(frame, "energy")
                return
            self._delivered = False
            yield self.medium.transmit(self.node_id, frame)
            self.sent += 1
            if frame.is_broadcast or self._delivered:
                self.on_done(frame, True)
                return
        self.on_done(frame, False)
