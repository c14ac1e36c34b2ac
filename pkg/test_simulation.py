"""
Channel, MAC, energy, mobility and whole-trial checks of the simulator.
"""
import numpy as np
import pandas as pd
import pytest

from config.scenario import parse_scenario
from simulation.channel import ChannelModel, Frame, LinkTable, Medium
from simulation.energy import EnergyLedger, EnergyModel, Radio, RadioState
from simulation.kernel import EventQueue
from simulation.mac import CsmaMac, MacConfig
from simulation.mobility import MobilityPlan, move_mobile_nodes
from simulation.topology import eccentricity, generate_topology, hop_diameter, is_connected
from simulation.trace import PACKET_COLUMNS, format_event, parse_trace_line
from simulation.trial import run_trial


class StubNode:
    """Bare radio endpoint for medium and MAC tests."""

    def __init__(self, node_id):
        self.node_id = node_id
        self.radio = Radio(EnergyLedger(EnergyModel()))
        self.listening = True
        self.frames = []
        self.done = []
        self.mac = None

    def on_frame(self, frame, rssi):
        self.frames.append((frame, rssi))

    def on_tx_done(self, frame, delivered):
        self.done.append((frame, delivered))
        if self.mac is not None:
            self.mac.tx_done(frame, delivered)


class ScriptedRng:
    """Backoff draws in a fixed order, 0 once exhausted."""

    def __init__(self, draws):
        self.draws = list(draws)

    def integers(self, low, high):
        return self.draws.pop(0) if self.draws else low


def build_medium(positions, **channel):
    queue = EventQueue()
    model = ChannelModel(sigma=0.0, **channel)
    links = LinkTable(model, np.asarray(positions, dtype=float), np.random.default_rng(0))
    medium = Medium(queue, links, keep_outcomes=True)
    nodes = [StubNode(i) for i in range(len(positions))]
    medium.attach(nodes)
    return queue, medium, nodes


def frame(sender, dest, size=40):
    return Frame(packet=f"{sender}->{dest}", sender=sender, dest=dest, size_bytes=size)


# -- channel -----------------------------------------------------------------

def test_mean_received_power_decreases_with_distance():
    model = ChannelModel()
    powers = model.mean_rx_power(np.linspace(1.5, 300.0, 500))
    assert np.all(np.diff(powers) < 0)


def test_decode_range_from_link_budget():
    model = ChannelModel()
    budget = model.tx_power - model.pl_d0 - (model.noise_floor + model.sinr_threshold)
    assert model.decode_range() == pytest.approx(10 ** (budget / (10 * model.path_loss_exponent)))
    assert 25.0 < model.decode_range() < 50.0


def test_lone_frame_at_ten_meters_is_decoded():
    queue, medium, nodes = build_medium([(0, 0), (10, 0)])
    sent = frame(1, 0)
    medium.transmit(1, sent)
    queue.run(until=1.0)
    assert [f for f, _ in nodes[0].frames] == [sent]
    assert nodes[0].frames[0][1] == pytest.approx(ChannelModel().mean_rx_power(10.0))
    assert nodes[1].done == [(sent, True)]


def test_frame_at_two_hundred_meters_is_not_decoded():
    queue, medium, nodes = build_medium([(0, 0), (200, 0)])
    medium.transmit(1, frame(1, 0))
    queue.run(until=1.0)
    assert nodes[0].frames == []
    assert nodes[1].done[0][1] is False


def test_airtime_at_250_kbps():
    assert ChannelModel().airtime(125) == pytest.approx(0.004)


@pytest.mark.parametrize("order", [(1, 2), (2, 1)])
def test_equal_power_collision_loses_both(order):
    queue, medium, nodes = build_medium([(0, 0), (10, 0), (-10, 0)])
    for sender in order:
        medium.transmit(sender, frame(sender, 0))
    queue.run(until=1.0)
    assert nodes[0].frames == []
    assert all(delivered is False for node in nodes[1:] for _, delivered in node.done)
    at_sink = [o for o in medium.stats.outcomes if o.receiver == 0]
    assert all(not o.decoded for o in at_sink)


def test_broadcast_reaches_every_listener_in_range():
    queue, medium, nodes = build_medium([(0, 0), (10, 0), (20, 0), (150, 0)])
    medium.transmit(1, frame(1, 0xFFFF))
    queue.run(until=1.0)
    assert len(nodes[0].frames) == 1 and len(nodes[2].frames) == 1
    assert nodes[3].frames == []


def test_sleeping_receiver_hears_nothing():
    queue, medium, nodes = build_medium([(0, 0), (10, 0)])
    nodes[0].listening = False
    medium.transmit(1, frame(1, 0))
    queue.run(until=1.0)
    assert nodes[0].frames == []


def test_ideal_downlink_lifts_decoding_not_interference():
    # sink at the origin, a far product at 300 m and a remote 2 -> 3 link
    queue, medium, nodes = build_medium([(0, 0), (300, 0), (160, 0), (190, 0)])
    medium.transmit(2, frame(2, 3))
    medium.transmit(0, Frame(packet="cmd", sender=0, dest=0xFFFF, size_bytes=60, high_power=True))
    assert medium.channel_clear(1)
    assert medium.incoming_dbm(1) < ChannelModel().cca_threshold
    queue.run(until=1.0)
    assert [f.packet for f, _ in nodes[1].frames] == ["cmd"]
    assert [f.packet for f, _ in nodes[3].frames] == ["2->3"]
    assert nodes[2].done[0][1] is True


def test_shadowing_is_symmetric_and_seeded():
    positions = generate_topology(20, 4)
    a = LinkTable(ChannelModel(sigma=4.0), positions, np.random.default_rng(9))
    b = LinkTable(ChannelModel(sigma=4.0), positions, np.random.default_rng(9))
    assert np.array_equal(a.shadowing, a.shadowing.T)
    assert np.array_equal(a.rx_low, b.rx_low)


# -- MAC ---------------------------------------------------------------------

def attach_macs(queue, medium, nodes, draws, config=MacConfig()):
    macs = {}
    for node_id, script in draws.items():
        mac = CsmaMac(node_id, queue, medium, ScriptedRng(script), config)
        nodes[node_id].mac = mac
        macs[node_id] = mac
    return macs


def test_idle_channel_sends_after_first_backoff():
    queue, medium, nodes = build_medium([(0, 0), (10, 0)])
    macs = attach_macs(queue, medium, nodes, {1: [5]})
    macs[1].send(frame(1, 0), rank=0)
    queue.run(until=1.0)
    assert len(nodes[0].frames) == 1
    assert macs[1].backoff_log == [(pytest.approx(5 * 320e-6), pytest.approx(5 * 320e-6))]
    assert macs[1].sent == 1


def test_contending_nodes_serialize():
    queue, medium, nodes = build_medium([(0, 0), (10, 0), (0, 10)])
    macs = attach_macs(queue, medium, nodes, {1: [0], 2: [2, 7]})
    macs[1].send(frame(1, 0), rank=0)
    macs[2].send(frame(2, 0), rank=0)
    queue.run(until=1.0)
    assert sorted(f.sender for f, _ in nodes[0].frames) == [1, 2]
    # node 2 found the channel busy once, then backed off again
    assert len(macs[2].backoff_log) == 2
    assert nodes[1].done[0][1] and nodes[2].done[0][1]


def test_busy_channel_exhausts_backoffs():
    queue, medium, nodes = build_medium([(0, 0), (10, 0), (0, 10)])
    macs = attach_macs(queue, medium, nodes, {1: [0], 2: []})
    macs[1].send(frame(1, 0, size=127), rank=0)
    queue.schedule(0.0005, lambda _: macs[2].send(frame(2, 0), rank=0))
    queue.run(until=1.0)
    assert macs[2].drops == {"mac_backoff": 1}
    assert len(macs[2].backoff_log) == MacConfig().max_backoffs + 1


def test_queue_overflow_drops():
    queue, medium, nodes = build_medium([(0, 0), (10, 0)])
    macs = attach_macs(queue, medium, nodes, {1: []}, MacConfig(queue_capacity=2))
    accepted = [macs[1].send(frame(1, 0), rank=2) for _ in range(5)]
    assert accepted == [True, True, False, False, False]
    assert macs[1].drops == {"queue_overflow": 3}


def test_alerts_leave_before_routine():
    queue, medium, nodes = build_medium([(0, 0), (10, 0)])
    macs = attach_macs(queue, medium, nodes, {1: []})
    routine, alert = frame(1, 0), Frame(packet="alert", sender=1, dest=0, size_bytes=40)
    macs[1].send(routine, rank=2)
    macs[1].send(alert, rank=0)
    queue.run(until=1.0)
    assert [f.packet for f, _ in nodes[0].frames] == ["alert", routine.packet]


def test_alert_preempts_a_routine_frame_in_backoff():
    queue, medium, nodes = build_medium([(0, 0), (10, 0)])
    macs = attach_macs(queue, medium, nodes, {1: [5]})
    routine = frame(1, 0)
    macs[1].send(routine, rank=2)
    queue.schedule(0.0005, lambda _: macs[1].send(Frame(packet="alert", sender=1, dest=0, size_bytes=40), rank=0))
    queue.run(until=1.0)
    assert [f.packet for f, _ in nodes[0].frames] == ["alert", routine.packet]
    assert macs[1].preemptions == 1
    assert macs[1].sent == 2


class RecordingRng:
    """Always draws 0 and remembers the exclusive upper bound it was asked for."""

    def __init__(self):
        self.highs = []

    def integers(self, low, high):
        self.highs.append(high)
        return low


def test_alerts_contend_with_a_narrower_window():
    queue, medium, nodes = build_medium([(0, 0), (10, 0)])
    rng = RecordingRng()
    mac = CsmaMac(1, queue, medium, rng)
    nodes[1].mac = mac
    mac.send(Frame(packet="alert", sender=1, dest=0, size_bytes=40), rank=0)
    mac.send(frame(1, 0), rank=2)
    queue.run(until=1.0)
    cfg = MacConfig()
    assert rng.highs == [2 ** cfg.alert_min_be, 2 ** cfg.min_be]


def test_mac_config_rejects_inverted_exponents():
    with pytest.raises(ValueError):
        MacConfig(alert_min_be=5, alert_max_be=4)


def test_frame_retry_budget_can_be_lowered():
    queue, medium, nodes = build_medium([(0, 0), (10, 0)])
    nodes[0].listening = False
    macs = attach_macs(queue, medium, nodes, {1: []})
    macs[1].send(frame(1, 0), rank=1, retries=0)
    queue.run(until=1.0)
    assert macs[1].sent == 1
    assert [delivered for _, delivered in nodes[1].done] == [False]


def test_unicast_without_receiver_is_retried():
    queue, medium, nodes = build_medium([(0, 0), (10, 0)])
    nodes[0].listening = False
    macs = attach_macs(queue, medium, nodes, {1: []})
    macs[1].send(frame(1, 0), rank=0)
    queue.run(until=1.0)
    assert macs[1].sent == MacConfig().max_frame_retries + 1


# -- energy ------------------------------------------------------------------

def test_ledger_debits_current_times_duration_times_voltage():
    model = EnergyModel()
    ledger = EnergyLedger(model)
    radio = Radio(ledger)
    radio.set_state(RadioState.TX, 2.0)
    radio.set_state(RadioState.SLEEP, 2.5)
    radio.settle(10.0)
    expected = (2.0 * model.active_current + 0.5 * model.tx_current + 7.5 * model.sleep_current) * model.voltage
    assert ledger.consumed == pytest.approx(expected, rel=1e-12)
    assert ledger.expected_consumption() == pytest.approx(ledger.consumed, rel=1e-12)
    assert ledger.remaining == pytest.approx(model.initial_energy - expected)


def test_ledger_caps_at_zero():
    ledger = EnergyLedger(EnergyModel(initial_energy=0.01))
    ledger.debit(RadioState.TX, 1000.0)
    assert ledger.remaining == 0.0 and ledger.depleted


# -- mobility and topology ---------------------------------------------------

def test_linear_waypoint_motion():
    plan = MobilityPlan((0.0, 0.0), ((10.0, 0.0),), speed=1.0)
    assert plan.position_at(5.0) == pytest.approx((5.0, 0.0))
    assert plan.position_at(50.0) == pytest.approx((10.0, 0.0))
    assert plan.arrival_time() == pytest.approx(10.0)


def test_no_waypoints_means_static():
    plan = MobilityPlan((3.0, 4.0))
    assert plan.is_static and plan.position_at(100.0) == (3.0, 4.0)
    positions = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert np.array_equal(move_mobile_nodes(positions, {1: plan}, 100.0), positions)


def test_approach_crosses_bad_then_danger_distance():
    static = np.array([20.0, 10.0])
    plan = MobilityPlan((10.0, 35.0), ((19.0, 12.0),), speed=0.25, depart=20.0)
    times = np.arange(0.0, 200.0, 0.5)
    distances = np.array([np.hypot(*(np.asarray(plan.position_at(t)) - static)) for t in times])
    crossed_bad = times[np.argmax(distances <= 8.0)]
    crossed_danger = times[np.argmax(distances < 5.0)]
    assert distances[0] > 8.0
    assert crossed_bad < crossed_danger


def test_topology_bounds_and_sink():
    positions = generate_topology(200, 11)
    assert positions.shape == (201, 2)
    assert tuple(positions[0]) == (150.0, 0.0)
    assert positions[1:].min() >= 0.0 and positions[1:].max() <= 300.0
    assert np.array_equal(positions, generate_topology(200, 11))
    assert generate_topology(1, 0).shape == (2, 2)
    with pytest.raises(ValueError):
        generate_topology(0, 0)


def test_hop_diameter_of_chain():
    chain = [[1], [0, 2], [1, 3], [2]]
    assert hop_diameter(chain) == 3
    assert is_connected(chain)
    assert not is_connected([[1], [0], []])


def test_hop_diameter_is_not_the_sink_eccentricity():
    # 3 - 1 - sink - 2 - 4: the sink sits in the middle of the chain
    adjacency = [[1, 2], [0, 3], [0, 4], [1], [2]]
    assert eccentricity(adjacency) == 2
    assert hop_diameter(adjacency) == 4
    # nodes outside the sink's component do not count
    assert hop_diameter([[1], [0], [3], [2, 4], [3]]) == 1


# -- kernel and trace --------------------------------------------------------

def test_equal_timestamps_fire_in_insertion_order():
    queue = EventQueue()
    fired = []
    for label in "abc":
        queue.schedule_at(1.0, lambda e: fired.append(e.payload), payload=label)
    cancelled = queue.schedule_at(1.0, lambda e: fired.append("x"))
    cancelled.cancel()
    queue.run(until=2.0)
    assert fired == ["a", "b", "c"]
    with pytest.raises(ValueError):
        queue.schedule(-1.0, lambda e: None)


def test_trace_line_format():
    line = format_event(12.0, 3, "SEND", {"kind": "ALE", "dst": 0, "value": 15.0})
    assert line == "t=12.000000 node=3 SEND kind=ALE dst=0 value=15.000000"
    assert parse_trace_line(line) == (12.0, 3, "SEND", {"kind": "ALE", "dst": "0", "value": "15.000000"})


# -- whole trials ------------------------------------------------------------

SMALL = """
[scenario]
name = small
duration = 40
traffic = not-congested
traffic_start = 5

[topology]
n_nodes = 15
area = 90, 90

[routing]
gradient_start = 1.5
"""


@pytest.fixture(scope="module")
def small():
    return parse_scenario(SMALL)


@pytest.fixture(scope="module")
def small_result(small):
    return run_trial(small, 3)


def test_same_seed_gives_identical_artifacts(small, small_result):
    again = run_trial(small, 3)
    assert again.trace.text() == small_result.trace.text()
    assert again.ledger.csv_text() == small_result.ledger.csv_text()


def test_different_seed_changes_topology(small, small_result):
    other = run_trial(small, 4)
    assert not np.array_equal(other.positions, small_result.positions)


def test_trial_energy_is_conserved(small_result):
    assert small_result.energy_conservation_error() < 1e-9


def test_trial_records_are_causal_and_complete(small_result):
    frame = small_result.packet_frame()
    assert list(frame.columns) == PACKET_COLUMNS
    assert len(frame) > 0
    delivered = frame[frame["delivery"].notna()]
    assert (delivered["delivery"] >= delivered["birth"]).all()
    assert (frame["delivery"].notna() | frame["loss_cause"].notna()).all()


def test_trial_alert_copies_are_disjoint(small_result):
    assert small_result.disjointness_violations() == []


def test_trial_writes_artifacts(small_result, tmp_path):
    directory = small_result.write(tmp_path / "3")
    assert (directory / "trace.log").read_text() == small_result.trace.text()
    again = pd.read_csv(directory / "packets.csv")
    assert len(again) == len(small_result.packet_frame())


def test_products_boot_and_register(small_result):
    events = [parse_trace_line(line)[2] for line in small_result.trace.lines]
    assert events.count("BOOT") == 15
    assert "CONFIGURED" in events
    assert small_result.gradients[0] == 0
