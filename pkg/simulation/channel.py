"""
Radio channel: log-distance path loss with lognormal shadowing and an
additive-interference reception model.

received power = tx_power - PL(d0) - 10 n log10(d / d0) - X
X ~ Normal(0, sigma^2), drawn once per link per trial, same in both
directions. A receiver decodes a frame when the signal over noise plus
the worst concurrent interference stays above the SINR threshold for the
whole frame.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol

import numpy as np
import simpy
from pydantic import BaseModel, ConfigDict, Field

from protocol.messages import BROADCAST
from simulation.energy import RadioState
from simulation.kernel import EventQueue

logger = logging.getLogger(__name__)


class ChannelModel(BaseModel):
    """Path-loss, noise and decoding constants of the warehouse channel."""

    model_config = ConfigDict(frozen=True)

    path_loss_exponent: float = Field(default=2.4, gt=0)
    pl_d0: float = 55.0
    d0: float = Field(default=1.0, gt=0)
    sigma: float = Field(default=4.0, ge=0)
    noise_floor: float = -100.0
    sinr_threshold: float = 6.0
    interference_floor: float = -110.0
    cca_threshold: float = -95.0
    tx_power: float = Field(default=0.0, ge=-24.0, le=0.0)
    sink_tx_power: float = 0.0
    ideal_downlink: bool = True
    downlink_margin: float = 10.0
    data_rate: float = Field(default=250_000.0, gt=0)

    def path_loss(self, distance):
        """Mean path loss in dB; distances below d0 are clamped to d0."""
        d = np.maximum(np.asarray(distance, dtype=float), self.d0)
        loss = self.pl_d0 + 10.0 * self.path_loss_exponent * np.log10(d / self.d0)
        return float(loss) if np.ndim(loss) == 0 else loss

    def mean_rx_power(self, distance, tx_power: Optional[float] = None):
        tx = self.tx_power if tx_power is None else tx_power
        return tx - self.path_loss(distance)

    def decode_range(self, tx_power: Optional[float] = None) -> float:
        """Distance at which the mean received power meets the decode threshold."""
        tx = self.tx_power if tx_power is None else tx_power
        budget = tx - self.pl_d0 - (self.noise_floor + self.sinr_threshold)
        return self.d0 * 10.0 ** (budget / (10.0 * self.path_loss_exponent))

    def airtime(self, size_bytes: int) -> float:
        return size_bytes * 8.0 / self.data_rate


def dbm_to_mw(dbm):
    return np.power(10.0, np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw: float) -> float:
    return float(10.0 * np.log10(mw)) if mw > 0 else float("-inf")


@dataclass(frozen=True)
class Frame:
    packet: Any
    sender: int
    dest: int
    size_bytes: int
    high_power: bool = False

    @property
    def is_broadcast(self) -> bool:
        return self.dest == BROADCAST


class LinkTable:
    """Received-power matrix for the current node positions."""

    def __init__(self, model: ChannelModel, positions: np.ndarray, rng: np.random.Generator, sink: int = 0):
        self.model = model
        self.sink = sink
        n = len(positions)
        draws = rng.normal(0.0, model.sigma, size=(n, n)) if model.sigma > 0 else np.zeros((n, n))
        upper = np.triu(draws, k=1)
        self.shadowing = upper + upper.T
        self.refresh(positions)

    def refresh(self, positions: np.ndarray) -> None:
        self.positions = np.asarray(positions, dtype=float).copy()
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        self.distances = np.hypot(diff[..., 0], diff[..., 1])
        rx = self.model.tx_power - self.model.path_loss(self.distances) - self.shadowing
        np.fill_diagonal(rx, -np.inf)
        self.rx_low = rx

        high = self.model.sink_tx_power - self.model.path_loss(self.distances[self.sink]) - self.shadowing[self.sink]
        high[self.sink] = -np.inf
        self.rx_high = high

        # the ideal downlink only lifts what the sink's frames decode at; the
        # energy they add to other receptions and to CCA stays physical
        decode_high = high.copy()
        if self.model.ideal_downlink:
            floor = self.model.noise_floor + self.model.sinr_threshold + self.model.downlink_margin
            decode_high = np.maximum(decode_high, floor)
            decode_high[self.sink] = -np.inf
        self.decode_high = decode_high

        cutoff = self.model.interference_floor
        self._audible_low = [np.flatnonzero(row >= cutoff) for row in self.rx_low]
        self._audible_high = np.flatnonzero(self.rx_high >= cutoff)
        self._decodable_high = np.flatnonzero(self.decode_high >= cutoff)

    def rx_power(self, sender: int, receiver: int, high_power: bool = False) -> float:
        """Physical received power in dBm."""
        if high_power and sender == self.sink:
            return float(self.rx_high[receiver])
        return float(self.rx_low[sender, receiver])

    def footprint(self, sender: int, high_power: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Indices that hear the sender above the interference floor, and their powers (dBm)."""
        if high_power and sender == self.sink:
            idx = self._audible_high
            return idx, self.rx_high[idx]
        idx = self._audible_low[sender]
        return idx, self.rx_low[sender, idx]

    def decode_footprint(self, sender: int, high_power: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Like footprint, but with the power each receiver decodes the frame at."""
        if high_power and sender == self.sink:
            idx = self._decodable_high
            return idx, self.decode_high[idx]
        return self.footprint(sender, high_power)

    def connectivity(self, mean: bool = True) -> list[list[int]]:
        """Unit-disk adjacency from the mean decode range (or the shadowed powers)."""
        threshold = self.model.noise_floor + self.model.sinr_threshold
        if mean:
            rx = self.model.tx_power - self.model.path_loss(self.distances)
            np.fill_diagonal(rx, -np.inf)
        else:
            rx = self.rx_low
        return [list(np.flatnonzero(row >= threshold)) for row in rx]


class Listener(Protocol):
    node_id: int
    radio: Any

    @property
    def listening(self) -> bool: ...

    def on_frame(self, frame: Frame, rssi: float) -> None: ...

    def on_tx_done(self, frame: Frame, delivered: bool) -> None: ...


@dataclass
class Transmission:
    sender: int
    frame: Frame
    start: float
    end: float
    receivers: np.ndarray
    power_mw: np.ndarray
    power_dbm: np.ndarray
    listeners: np.ndarray
    signal_dbm: np.ndarray


@dataclass
class Reception:
    tx: Transmission
    signal_mw: float
    signal_dbm: float
    worst_interference_mw: float
    own_mw: float = 0.0
    aborted: bool = False


@dataclass
class DeliveryOutcome:
    receiver: int
    decoded: bool
    sinr_db: float


@dataclass
class MediumStats:
    frames: int = 0
    decoded: int = 0
    lost: int = 0
    outcomes: list = field(default_factory=list)


class Medium:
    """Shared radio medium: tracks concurrent transmissions and receptions."""

    def __init__(self, queue: EventQueue, links: LinkTable, keep_outcomes: bool = False):
        self.queue = queue
        self.links = links
        self.model = links.model
        self.nodes: list[Listener] = []
        n = len(links.positions)
        self._incoming_mw = np.zeros(n)
        self._noise_mw = float(dbm_to_mw(self.model.noise_floor))
        self._transmitting: dict[int, Transmission] = {}
        self._locked: dict[int, Reception] = {}
        self.stats = MediumStats()
        self.keep_outcomes = keep_outcomes

    def attach(self, nodes: list[Listener]) -> None:
        self.nodes = nodes

    def is_transmitting(self, node: int) -> bool:
        return node in self._transmitting

    def incoming_dbm(self, node: int) -> float:
        return mw_to_dbm(self._incoming_mw[node])

    def channel_clear(self, node: int) -> bool:
        return node not in self._transmitting and self.incoming_dbm(node) < self.model.cca_threshold

    def transmit(self, sender: int, frame: Frame) -> simpy.Event:
        """Start sending a frame; the returned event fires when the frame ends."""
        now = self.queue.now
        airtime = self.model.airtime(frame.size_bytes)
        receivers, power_dbm = self.links.footprint(sender, frame.high_power)
        listeners, signal_dbm = self.links.decode_footprint(sender, frame.high_power)
        power_mw = dbm_to_mw(power_dbm)
        tx = Transmission(sender, frame, now, now + airtime, receivers, power_mw, power_dbm, listeners, signal_dbm)

        own = self._locked.pop(sender, None)
        if own is not None:
            own.aborted = True
        self.nodes[sender].radio.set_state(RadioState.TX, now)
        self._transmitting[sender] = tx
        self.stats.frames += 1

        self._incoming_mw[receivers] += power_mw
        added = dict(zip(receivers.tolist(), power_mw.tolist()))
        for r in added:
            current = self._locked.get(r)
            if current is not None:
                current.worst_interference_mw = max(
                    current.worst_interference_mw, self._incoming_mw[r] - current.own_mw
                )

        sensitivity = self.model.noise_floor + self.model.sinr_threshold
        for r, p_dbm in zip(listeners.tolist(), signal_dbm.tolist()):
            if r in self._locked or r in self._transmitting or p_dbm < sensitivity:
                continue
            node = self.nodes[r]
            if not node.listening:
                continue
            own_mw = added.get(r, 0.0)
            interference = max(0.0, self._incoming_mw[r] - own_mw)
            self._locked[r] = Reception(tx, float(dbm_to_mw(p_dbm)), p_dbm, interference, own_mw)
            node.radio.set_state(RadioState.RX, now)

        done = self.queue.timeout(airtime)
        done.callbacks.append(lambda _: self._finish(tx))
        return done

    def _finish(self, tx: Transmission) -> None:
        now = self.queue.now
        self._incoming_mw[tx.receivers] -= tx.power_mw
        np.maximum(self._incoming_mw, 0.0, out=self._incoming_mw)
        del self._transmitting[tx.sender]
        sender = self.nodes[tx.sender]
        sender.radio.set_state(RadioState.IDLE if sender.listening else RadioState.SLEEP, now)

        threshold = self.model.sinr_threshold
        delivered_to_dest = False
        decoded_at: list[tuple[int, float]] = []
        for r in tx.listeners.tolist():
            rec = self._locked.get(r)
            if rec is None or rec.tx is not tx:
                continue
            del self._locked[r]
            node = self.nodes[r]
            node.radio.set_state(RadioState.IDLE if node.listening else RadioState.SLEEP, now)
            sinr = 10.0 * np.log10(rec.signal_mw / (self._noise_mw + rec.worst_interference_mw))
            ok = not rec.aborted and node.listening and sinr >= threshold
            if self.keep_outcomes:
                self.stats.outcomes.append(DeliveryOutcome(r, ok, float(sinr)))
            if ok:
                self.stats.decoded += 1
                decoded_at.append((r, rec.signal_dbm))
                if r == tx.frame.dest:
                    delivered_to_dest = True
            else:
                self.stats.lost += 1

        for r, rssi in decoded_at:
            if tx.frame.is_broadcast or tx.frame.dest == r:
                self.nodes[r].on_frame(tx.frame, rssi)
        sender.on_tx_done(tx.frame, delivered_to_dest)
