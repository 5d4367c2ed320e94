import heapq

import pytest

from mpflow.model import ValidationError, new_connection
from mpflow.simnet import (
    EventKind,
    LinkSpec,
    SimConfig,
    Simulation,
    mirror_connection,
)
from mpflow import simnet, sockopt
from mpflow.scenario import builtin_scenario, run_scenario
from mpflow.sockopt import SubPrioRequest
from helpers import addr

MSS = 1460
WINDOW = 32 * MSS
MBPS = 1_000_000


def build_sim(n_links, duration_ms=20_000, actions=()):
    sender = new_connection(
        [addr("10.0.0.1")], [addr(f"10.0.{i + 1}.1") for i in range(n_links)]
    )
    receiver = mirror_connection(sender)
    links = [
        LinkSpec(i + 1, mesh_pair, MBPS, 100)
        for i, mesh_pair in enumerate(sender.mesh_pairs())
    ]
    sim = Simulation(sender, receiver, links, duration_ms)
    for at_ms, fn, link_change in actions:
        sim.schedule_action(at_ms, fn, link_change=link_change)
    return sim


def link_action(link_id, up):
    return lambda sim: sim.set_link_state(link_id, up=up)


def bytes_by_flow_bucket(report):
    return {
        (row.bucket_start_ms // report.bucket_ms, row.subflow_id): row.bytes_acked
        for row in report.rows
    }


def step(sim):
    at, _, kind, payload = heapq.heappop(sim._heap)
    sim.now_us = at
    handler = {
        EventKind.SEGMENT_ARRIVAL: sim._on_segment_arrival,
        EventKind.ACK_ARRIVAL: sim._on_ack_arrival,
        EventKind.RTO_FIRE: sim._on_rto_fire,
        EventKind.PROBE_DUE: sim._on_probe_due,
        EventKind.REESTABLISH_ATTEMPT: sim._on_reestablish,
    }[kind]
    handler(payload)
    return kind


# --------------------------------------------------------------------- #
# retransmission timer arithmetic


def test_rto_fires_at_doubling_offsets_and_third_kills():
    sim = build_sim(1)
    sf = sim.sender.subflows[0]
    sf.srtt_us = 200_000
    sf.inflight_bytes = MSS
    sim._arm_rto(sf)
    fires = []
    while sf.alive:
        at, _, kind, payload = heapq.heappop(sim._heap)
        assert kind is EventKind.RTO_FIRE
        sim.now_us = at
        fires.append(at)
        sim._on_rto_fire(payload)
    # oracle: base = max(2 * 200 ms, 200 ms) = 400 ms, offsets double per
    # consecutive timeout => fires 400, 800, 1600 ms after arming
    assert fires == [400_000, 800_000, 1_600_000]
    assert sf.died_us == 1_600_000
    assert sf.inflight_bytes == 0


def test_rto_floor_applies_when_srtt_small():
    sim = build_sim(1)
    sf = sim.sender.subflows[0]
    sf.srtt_us = 10_000
    sf.inflight_bytes = MSS
    sim._arm_rto(sf)
    at, _, _, _ = sim._heap[0]
    assert at == 200_000  # max(2 * 10 ms, 200 ms)


def test_spurious_timeout_then_ack_resets_counter():
    sim = build_sim(1)
    sf = sim.sender.subflows[0]
    sim._send_segment(sf, MSS)
    # fresh flow: srtt 0 so the timer (200 ms) beats the first ack (211.68 ms)
    kinds = [step(sim) for _ in range(3)]
    assert kinds == [
        EventKind.SEGMENT_ARRIVAL,
        EventKind.RTO_FIRE,
        EventKind.ACK_ARRIVAL,
    ]
    assert sf.alive
    assert sf.consecutive_timeouts == 0
    # first sample: 11.68 ms serialization + 2 x 100 ms propagation
    assert sf.srtt_us == 211_680


# --------------------------------------------------------------------- #
# throughput model


def test_steady_state_saturates_each_link():
    report = build_sim(3, duration_ms=10_000).run()
    per = bytes_by_flow_bucket(report)
    # analytic rate oracle: min(window / rtt, bandwidth)
    base_rtt_s = (MSS * 8 / MBPS) + 0.2
    expected_bps = min(WINDOW * 8 / base_rtt_s, MBPS)
    assert expected_bps == MBPS  # window chosen above the path BDP
    for bucket in range(2, 10):
        for flow in (1, 2, 3):
            rate = per[(bucket, flow)] * 8
            assert abs(rate - expected_bps) <= 0.1 * expected_bps


def test_per_flow_bucket_rate_never_exceeds_link_capacity():
    report = run_scenario(builtin_scenario("fig4"))
    for row in report.rows:
        # one MSS of slack: ack arrivals quantize serialization across
        # bucket boundaries
        assert row.bytes_acked <= MBPS // 8 + MSS


def test_acked_never_exceeds_sent():
    sim = build_sim(
        2,
        duration_ms=20_000,
        actions=[(5_000, link_action(1, False), True), (12_000, link_action(1, True), True)],
    )
    report = sim.run()
    acked = {}
    for row in report.rows:
        acked[row.subflow_id] = acked.get(row.subflow_id, 0) + row.bytes_acked
    for sf in sim.sender.subflows:
        assert acked.get(sf.id, 0) <= sf.bytes_sent_total


def test_single_path_ppos_timeline_identical_to_default():
    plain = build_sim(1, duration_ms=8_000).run()

    def enable(sim):
        sockopt.enable_primary_path_only(sim.sender, sim.sender.mesh_pairs())

    ppos = build_sim(1, duration_ms=8_000, actions=[(0, enable, False)]).run()
    assert ppos == plain


# --------------------------------------------------------------------- #
# failure, detection and re-establishment


def test_outage_kills_busy_subflow_and_reestablishes_within_a_second():
    sim = build_sim(
        2,
        duration_ms=20_000,
        actions=[(5_000, link_action(1, False), True), (12_000, link_action(1, True), True)],
    )
    report = sim.run()
    records = {rec.subflow_id: rec for rec in report.subflow_genealogy}
    # busy sub-flow died a few retransmission timeouts after the cut
    assert records[1].died_ms is not None
    assert 5_000 < records[1].died_ms < 9_000
    # its pair came back as a brand-new sub-flow within one attempt period
    successor = records[3]
    assert successor.pair == records[1].pair
    assert 12_000 < successor.created_ms <= 13_100
    assert successor.died_ms is None


def test_dead_path_is_silent_until_successor_exists():
    sim = build_sim(
        2,
        duration_ms=20_000,
        actions=[(5_000, link_action(1, False), True), (12_000, link_action(1, True), True)],
    )
    report = sim.run()
    per = bytes_by_flow_bucket(report)
    died_bucket = next(
        rec.died_ms // 1000 for rec in report.subflow_genealogy if rec.subflow_id == 1
    )
    created_bucket = next(
        rec.created_ms // 1000
        for rec in report.subflow_genealogy
        if rec.subflow_id == 3
    )
    for bucket in range(6, 20):
        assert per.get((bucket, 1), 0) == 0
    for bucket in range(died_bucket + 1, created_bucket):
        assert per.get((bucket, 3), 0) == 0  # no rows before creation
    assert per[(created_bucket + 1, 3)] > 0


def test_surviving_path_carries_through_the_outage():
    sim = build_sim(
        2,
        duration_ms=20_000,
        actions=[(5_000, link_action(1, False), True), (12_000, link_action(1, True), True)],
    )
    per = bytes_by_flow_bucket(sim.run())
    for bucket in range(20):
        assert per[(bucket, 2)] > 0


def test_idle_backup_survives_via_probes():
    def mark_backup(sim):
        sockopt.set_subflow_priority(sim.sender, SubPrioRequest(2, True))

    sim = build_sim(2, duration_ms=15_000, actions=[(1_000, mark_backup, False)])
    report = sim.run()
    per = bytes_by_flow_bucket(report)
    for bucket in range(3, 15):
        assert per[(bucket, 2)] == 0  # silent while an active exists
    rec = next(r for r in report.subflow_genealogy if r.subflow_id == 2)
    assert rec.died_ms is None  # probes kept it alive the whole run


def test_downing_an_idle_backup_link_changes_no_throughput():
    def mark_backup(sim):
        sockopt.set_subflow_priority(sim.sender, SubPrioRequest(2, True))

    baseline = build_sim(
        2, duration_ms=15_000, actions=[(1_000, mark_backup, False)]
    ).run()
    dropped = build_sim(
        2,
        duration_ms=15_000,
        actions=[(1_000, mark_backup, False), (8_000, link_action(2, False), True)],
    ).run()
    base_per = bytes_by_flow_bucket(baseline)
    drop_per = bytes_by_flow_bucket(dropped)
    for bucket in range(15):
        assert drop_per[(bucket, 1)] == base_per[(bucket, 1)]
        assert drop_per.get((bucket, 2), 0) == base_per.get((bucket, 2), 0)
    for bucket in range(3, 15):
        assert drop_per.get((bucket, 2), 0) == 0
    # the idle path was detected dead through probe timeouts
    rec = next(r for r in dropped.subflow_genealogy if r.subflow_id == 2)
    assert rec.died_ms is not None and 8_000 < rec.died_ms < 14_000


def test_backup_silence_while_actives_schedulable():
    report = run_scenario(builtin_scenario("fig4"))
    per = bytes_by_flow_bucket(report)
    # sub-flows 2 and 3 are backup from t=15 s and sub-flow 1 carries alone
    for bucket in range(17, 35):
        assert per.get((bucket, 2), 0) == 0
        assert per.get((bucket, 3), 0) == 0


def test_identical_runs_produce_identical_reports():
    assert run_scenario(builtin_scenario("fig4")) == run_scenario(
        builtin_scenario("fig4")
    )


# --------------------------------------------------------------------- #
# validation


def test_every_mesh_pair_needs_a_link():
    sender = new_connection([addr("10.0.0.1")], [addr("10.0.1.1"), addr("10.0.2.1")])
    receiver = mirror_connection(sender)
    links = [LinkSpec(1, sender.mesh_pairs()[0], MBPS, 100)]
    with pytest.raises(ValidationError):
        Simulation(sender, receiver, links, duration_ms=1000)


def test_link_must_serve_a_connection_pair():
    sender = new_connection([addr("10.0.0.1")], [addr("10.0.1.1")])
    receiver = mirror_connection(sender)
    stray = LinkSpec(2, sender.mesh_pairs()[0], MBPS, 100)
    from helpers import pair

    links = [
        LinkSpec(1, sender.mesh_pairs()[0], MBPS, 100),
        LinkSpec(3, pair("10.9.0.1", "10.9.1.1"), MBPS, 100),
    ]
    with pytest.raises(ValidationError):
        Simulation(sender, receiver, links, duration_ms=1000)
    del stray


def test_unknown_link_id_rejected_at_runtime():
    sim = build_sim(1, duration_ms=1000)
    with pytest.raises(ValidationError):
        sim.set_link_state(9, up=False)


def test_link_spec_validation():
    from helpers import pair

    with pytest.raises(ValidationError):
        LinkSpec(1, pair("10.0.0.1", "10.0.1.1"), 0, 100)
    with pytest.raises(ValidationError):
        LinkSpec(1, pair("10.0.0.1", "10.0.1.1"), MBPS, -5)


def test_nonpositive_duration_rejected():
    sender = new_connection([addr("10.0.0.1")], [addr("10.0.1.1")])
    receiver = mirror_connection(sender)
    links = [LinkSpec(1, sender.mesh_pairs()[0], MBPS, 100)]
    with pytest.raises(ValidationError):
        Simulation(sender, receiver, links, duration_ms=0)
