"""
One simulation trial: build the warehouse, run it, collect the artifacts.

All randomness comes from one numpy SeedSequence per trial, split into
independent streams (topology, shadowing, boot times, traffic, one per
node), so (scenario, seed) fully determines the trace and the packet CSV.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from protocol.events import OperatorCommand
from protocol.messages import SINK_ID, Message, MessageKind
from protocol.product import ProductState
from protocol.sink import ProductProvision, SinkState
from simulation.channel import LinkTable, Medium, MediumStats
from simulation.energy import EnergyLedger
from simulation.kernel import EventQueue
from simulation.mobility import MobilityPlan, mobile_nodes, move_mobile_nodes
from simulation.node import NetworkSettings, SensorNode, SinkNode, TrialContext
from simulation.topology import generate_topology, hop_diameter
from simulation.trace import PacketLedger, TraceLog
from simulation.traffic import TrafficProfile

logger = logging.getLogger(__name__)

MIN_TTL = 4


@dataclass
class TrialResult:
    scenario: str
    seed: int
    protocol: str
    profile: str
    density: int
    duration: float
    trace: TraceLog
    ledger: PacketLedger
    energy: list[EnergyLedger]
    medium: MediumStats
    positions: np.ndarray
    gradients: list[Optional[int]]
    deliveries: dict[tuple[str, int, int], list[tuple[int, ...]]]
    sink: Optional[SinkState] = None
    products: dict[int, Optional[ProductState]] = field(default_factory=dict)
    unresolved: int = 0

    def packet_frame(self) -> pd.DataFrame:
        return self.ledger.to_frame()

    def write(self, directory: Path) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        self.trace.write(directory / "trace.log")
        self.ledger.write(directory / "packets.csv")
        return directory

    def disjointness_violations(self) -> list[tuple[int, int]]:
        """Alerts whose delivered copies shared a relay node."""
        violations = []
        for (cls, origin, seq), trails in self.deliveries.items():
            if cls != "alert" or len(trails) < 2:
                continue
            relays = [set(trail[1:]) for trail in trails]
            if any(a & b for a, b in itertools.combinations(relays, 2)):
                violations.append((origin, seq))
        return violations

    def energy_conservation_error(self) -> float:
        """Largest relative gap between debited energy and state occupancy cost."""
        worst = 0.0
        for ledger in self.energy:
            expected = ledger.expected_consumption()
            if expected > 0:
                worst = max(worst, abs(ledger.consumed - expected) / expected)
        return worst


def _ttl(links: LinkTable, override: Optional[int]) -> int:
    if override is not None:
        return override
    return max(MIN_TTL, 2 * hop_diameter(links.connectivity(mean=True)))


def run_trial(scenario, seed: int) -> TrialResult:
    """Execute one trial of `scenario` (a ScenarioConfig) with the given seed."""
    cfg = scenario.scenario
    n = scenario.topology.n_nodes
    root = np.random.SeedSequence(seed)
    topo_seed, shadow_seed, boot_seed, traffic_seed, node_root = root.spawn(5)

    positions = generate_topology(n, topo_seed, scenario.topology.area, scenario.topology.sink_xy)
    for pid, section in scenario.products.items():
        if section.position is not None:
            positions[pid] = section.position

    queue = EventQueue()
    links = LinkTable(scenario.channel, positions, np.random.default_rng(shadow_seed), sink=SINK_ID)
    medium = Medium(queue, links)
    routing = scenario.routing
    settings = NetworkSettings(
        protocol=cfg.routing,
        k_paths=routing.k_paths,
        gathering_window=routing.gathering_window,
        staleness=routing.staleness,
        inuse_lifetime=routing.inuse_lifetime,
        rrr_threshold=routing.rrr_threshold,
        rrr_window=routing.rrr_window,
        ttl=_ttl(links, routing.ttl),
        queue_capacity=scenario.mac.queue_capacity,
    )
    ctx = TrialContext(queue, medium, TraceLog(), PacketLedger(), settings)
    node_seeds = node_root.spawn(n + 1)
    boot_rng = np.random.default_rng(boot_seed)

    boots = {}
    for pid in range(1, n + 1):
        explicit = scenario.product(pid).boot
        boots[pid] = explicit if explicit is not None else float(boot_rng.uniform(0.0, cfg.boot_jitter))

    sink_app = None
    if cfg.application:
        sink_app = SinkState(
            catalog={pid: scenario.provision(pid) for pid in range(1, n + 1)},
            default_provision=ProductProvision(),
        )
    gradient_start = routing.gradient_start
    if gradient_start is None:
        gradient_start = max(boots.values()) + 0.1
    sink = SinkNode(SINK_ID, ctx, node_seeds[SINK_ID], app=sink_app, gradient_start=gradient_start,
                    gradient_period=routing.gradient_period, energy=scenario.energy, mac=scenario.mac)

    products: list[SensorNode] = []
    for pid in range(1, n + 1):
        section = scenario.product(pid)
        products.append(SensorNode(
            pid, ctx, node_seeds[pid],
            product=scenario.product_config(pid) if cfg.application else None,
            temperature=section.temperature if cfg.application else None,
            energy=scenario.energy, mac=scenario.mac, boot_time=boots[pid],
        ))
    nodes = [sink] + products
    medium.attach(nodes)

    for command in scenario.operator.commands:
        queue.schedule_at(command.time, lambda _, c=command: sink.command(OperatorCommand(c.action, c.target)))

    plans = {
        pid: MobilityPlan(tuple(positions[pid]), section.waypoints, section.speed, section.move_start)
        for pid, section in scenario.products.items() if section.waypoints
    }
    if mobile_nodes(plans):
        queue.process(_mobility(ctx, links, plans, cfg.mobility_step))

    if cfg.traffic != "none":
        profile = TrafficProfile.named(cfg.traffic)
        queue.schedule_at(cfg.traffic_start, lambda _: _start_traffic(ctx, products, profile, traffic_seed, cfg.duration))

    end = cfg.duration + cfg.drain
    logger.debug("trial %s seed=%d: %d nodes, ttl=%d, until t=%.1f", cfg.name, seed, n, settings.ttl, end)
    queue.run(until=end)
    for node in nodes:
        node.radio.settle(end)
    unresolved = ctx.ledger.finalize()

    return TrialResult(
        scenario=cfg.name,
        seed=seed,
        protocol=cfg.routing,
        profile=cfg.traffic,
        density=n,
        duration=cfg.duration,
        trace=ctx.trace,
        ledger=ctx.ledger,
        energy=[node.energy for node in nodes],
        medium=medium.stats,
        positions=links.positions.copy(),
        gradients=[node.routing.my_gradient for node in nodes],
        deliveries=ctx.deliveries,
        sink=sink.app,
        products={node.node_id: node.app for node in products},
        unresolved=unresolved,
    )


def _mobility(ctx: TrialContext, links: LinkTable, plans: dict[int, MobilityPlan], step: float):
    moving = mobile_nodes(plans)
    while True:
        yield ctx.queue.timeout(step)
        updated = move_mobile_nodes(links.positions, plans, ctx.now)
        changed = [pid for pid in moving if not np.array_equal(updated[pid], links.positions[pid])]
        if not changed:
            continue
        links.refresh(updated)
        for pid in changed:
            ctx.trace.emit(ctx.now, pid, "MOVE", x=float(updated[pid][0]), y=float(updated[pid][1]))


def _start_traffic(ctx: TrialContext, products: list[SensorNode], profile: TrafficProfile,
                   seed: np.random.SeedSequence, duration: float) -> None:
    streams = seed.spawn(len(products) * 2 + 1)
    chooser = np.random.default_rng(streams[0])
    with_gradient = [node.node_id for node in products if node.routing.my_gradient is not None]
    count = min(profile.alert_sources, len(with_gradient))
    sources = sorted(int(s) for s in chooser.choice(with_gradient, size=count, replace=False)) if count else []
    logger.debug("traffic %s: alert sources %s", profile.mode, sources)
    for index, node in enumerate(products):
        if profile.routine_rate > 0:
            rng = np.random.default_rng(streams[1 + 2 * index])
            ctx.queue.process(_generate(ctx, node, rng, profile.routine_rate, duration, MessageKind.INA))
        if node.node_id in sources and profile.alert_rate > 0:
            rng = np.random.default_rng(streams[2 + 2 * index])
            ctx.queue.process(_generate(ctx, node, rng, profile.alert_rate, duration, MessageKind.ALE))


def _generate(ctx: TrialContext, node: SensorNode, rng: np.random.Generator, rate: float, stop: float,
              kind: MessageKind):
    """Poisson source of synthetic uplink messages; only nodes holding a gradient generate."""
    counter = itertools.count(1)
    while True:
        yield ctx.queue.timeout(float(rng.exponential(1.0 / rate)))
        if ctx.now >= stop:
            return
        if node.routing.my_gradient is None or not node.listening:
            continue
        if kind == MessageKind.ALE:
            payload = {"alert_id": next(counter) & 0xFFFF, "level": 2, "cause": 0,
                       "value": math.nan, "distance": math.nan, "neighbor": 0}
        else:
            payload = {"value": 0.0, "level": 0}
        node.originate(Message(kind=kind, src=node.node_id, dst=SINK_ID, payload=payload), synthetic=True)
