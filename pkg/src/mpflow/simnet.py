"""Deterministic discrete-event simulator for a multipath connection.

One sender and one receiver exchange bulk data over a set of point-to-point
links, one link per (local, remote) interface pair. The engine models:

* serialization and propagation per link: a segment handed to a link starts
  serializing when the link is free, takes ``bytes * 8 / bandwidth``, and is
  delivered one one-way delay later; the ack returns after another one-way
  delay. Links are lossless while up; a down link drops every in-flight and
  future segment and ack.
* an infinite-backlog sender that keeps the windows of the sub-flows the
  scheduler offers filled with MSS-sized segments.
* failure detection by retransmission timeout: the timer starts at
  ``max(2 * srtt, 200 ms)`` and doubles per consecutive timeout (fires at
  base, 2*base, 4*base after the last acknowledgment); the third
  consecutive timeout declares the sub-flow dead, requeues its in-flight
  bytes and starts re-establishment attempts for its interface pair every
  second. An attempt that finds the link up opens a brand-new sub-flow,
  inheriting nothing.
* zero-length keepalive probes on idle sub-flows (one per second), so a
  path that carries no data is still health-checked through the same
  timeout machinery. Probes carry no payload and are invisible in the
  throughput accounting.
* MP_PRIO delivery: priority signals queued on the sender ride the next
  outgoing segment and are applied to the receiver's view on arrival.

Timeouts are counters only; no retransmission segment is emitted, because
links are lossless while up, so a timeout implies the path is down and
recovery happens through death plus re-establishment. A consequence is that
any outage long enough to eat three timeouts replaces the sub-flow.

Everything runs on an integer microsecond clock with stable event ordering
(time, insertion order), so identical inputs give byte-identical reports on
any platform.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

from . import sockopt
from .model import (
    ConnectionState,
    EndpointAddress,
    InterfacePair,
    PORT_BASE,
    SubflowState,
    ValidationError,
    new_connection,
    open_subflow,
)
from .scheduler import select

US_PER_MS = 1000


@dataclass(frozen=True)
class SimConfig:
    """Transmission constants. The defaults saturate a 1 Mbps / 200 ms-RTT
    path: 32 * 1460 B / 0.2 s is about 1.87 Mbps of window, above link rate."""

    mss: int = 1460
    window_bytes: int = 32 * 1460
    rto_min_us: int = 200_000
    rto_death_timeouts: int = 3
    probe_interval_us: int = 1_000_000
    reestablish_interval_us: int = 1_000_000


@dataclass(frozen=True)
class LinkSpec:
    """A point-to-point link bound to one interface pair."""

    link_id: int
    pair: InterfacePair
    bandwidth_bps: int
    one_way_delay_ms: int
    up: bool = True

    def __post_init__(self) -> None:
        if self.bandwidth_bps <= 0:
            raise ValidationError(f"link {self.link_id}: bandwidth must be positive")
        if self.one_way_delay_ms < 0:
            raise ValidationError(f"link {self.link_id}: delay must be >= 0")


@dataclass
class ThroughputBucket:
    """Acked bytes of one sub-flow in one bucket, with the flags the
    sub-flow had when the bucket closed."""

    bucket_start_ms: int
    subflow_id: int
    bytes_acked: int
    low_prio: bool
    alive: bool


@dataclass(frozen=True)
class SubflowRecord:
    """Genealogy entry: one sub-flow's pair and lifetime."""

    subflow_id: int
    pair: InterfacePair
    created_ms: int
    died_ms: Optional[int]


@dataclass
class TimelineReport:
    """Per-bucket, per-sub-flow throughput plus the sub-flow genealogy."""

    bucket_ms: int
    duration_ms: int
    rows: List[ThroughputBucket]
    subflow_genealogy: List[SubflowRecord]


class EventKind(Enum):
    SEGMENT_ARRIVAL = "segment-arrival"
    ACK_ARRIVAL = "ack-arrival"
    RTO_FIRE = "rto-fire"
    LINK_CHANGE = "link-change"
    APP_ACTION = "app-action"
    REESTABLISH_ATTEMPT = "reestablish-attempt"
    PROBE_DUE = "probe-due"


@dataclass
class _Link:
    spec: LinkSpec
    up: bool
    epoch: int = 0
    tx_free_us: int = 0


@dataclass
class _FlowTimer:
    rto_seq: int = 0
    armed_at_us: Optional[int] = None
    base_us: int = 0
    probe_outstanding: bool = False
    probe_seq: int = 0


class Simulation:
    """A single deterministic run. Build one, call :meth:`run` once."""

    def __init__(
        self,
        sender: ConnectionState,
        receiver: ConnectionState,
        links: List[LinkSpec],
        duration_ms: int,
        bucket_ms: int = 1000,
        config: SimConfig = SimConfig(),
    ) -> None:
        if duration_ms <= 0:
            raise ValidationError("duration must be positive")
        if bucket_ms <= 0:
            raise ValidationError("bucket width must be positive")
        self.sender = sender
        self.receiver = receiver
        self.config = config
        self.duration_us = duration_ms * US_PER_MS
        self.bucket_us = bucket_ms * US_PER_MS
        self.bucket_ms = bucket_ms
        self.duration_ms = duration_ms
        self.now_us = 0

        self._links_by_pair: Dict[InterfacePair, _Link] = {}
        self._links_by_id: Dict[int, _Link] = {}
        for spec in links:
            if spec.pair in self._links_by_pair:
                raise ValidationError(f"duplicate link for pair {spec.pair}")
            if spec.link_id in self._links_by_id:
                raise ValidationError(f"duplicate link id {spec.link_id}")
            link = _Link(spec=spec, up=spec.up)
            self._links_by_pair[spec.pair] = link
            self._links_by_id[spec.link_id] = link
        mesh = sender.mesh_pairs()
        for pair in mesh:
            if pair not in self._links_by_pair:
                raise ValidationError(f"no link serves interface pair {pair}")
        for spec in links:
            if spec.pair not in mesh:
                raise ValidationError(
                    f"link {spec.link_id} pair {spec.pair} is not a pair of the connection"
                )

        self._heap: List[tuple] = []
        self._seq = 0
        self._timers: Dict[int, _FlowTimer] = {
            sf.id: _FlowTimer() for sf in sender.subflows
        }
        self._acked: Dict[Tuple[int, int], int] = {}
        # (time_us, flow_id, low_prio): priority history for bucket rows
        self._flag_log: List[Tuple[int, int, bool]] = [
            (0, sf.id, sf.low_prio) for sf in sender.subflows
        ]
        self._reestablishing: set = set()
        self._finished = False

    # ------------------------------------------------------------------ #
    # event plumbing

    def _push(self, at_us: int, kind: EventKind, payload: tuple) -> None:
        heapq.heappush(self._heap, (at_us, self._seq, kind, payload))
        self._seq += 1

    def schedule_action(
        self, at_ms: int, action: Callable[["Simulation"], None], link_change: bool = False
    ) -> None:
        kind = EventKind.LINK_CHANGE if link_change else EventKind.APP_ACTION
        self._push(at_ms * US_PER_MS, kind, (action,))

    # ------------------------------------------------------------------ #
    # link and flow helpers

    def link_for(self, pair: InterfacePair) -> _Link:
        return self._links_by_pair[pair]

    def set_link_state(self, link_id: int, up: bool) -> None:
        """Bring a link up or down, dropping everything in flight on it."""
        link = self._links_by_id.get(link_id)
        if link is None:
            raise ValidationError(f"no link with id {link_id}")
        link.up = up
        link.epoch += 1
        link.tx_free_us = self.now_us

    def _serialization_us(self, nbytes: int, link: _Link) -> int:
        return nbytes * 8 * 1_000_000 // link.spec.bandwidth_bps

    def _send_segment(self, sf: SubflowState, nbytes: int, is_probe: bool = False) -> None:
        link = self.link_for(sf.pair())
        start = max(self.now_us, link.tx_free_us)
        done = start + self._serialization_us(nbytes, link)
        link.tx_free_us = done
        if not is_probe:
            sf.inflight_bytes += nbytes
            sf.bytes_sent_total += nbytes
        options = tuple(self.sender.outbox)
        self.sender.outbox.clear()
        arrive = done + link.spec.one_way_delay_ms * US_PER_MS
        self._push(
            arrive,
            EventKind.SEGMENT_ARRIVAL,
            (sf.id, nbytes, link.epoch, self.now_us, options, is_probe),
        )
        timer = self._timers[sf.id]
        if timer.armed_at_us is None:
            self._arm_rto(sf)

    def _arm_rto(self, sf: SubflowState) -> None:
        timer = self._timers[sf.id]
        timer.armed_at_us = self.now_us
        timer.base_us = max(2 * sf.srtt_us, self.config.rto_min_us)
        fire_at = timer.armed_at_us + timer.base_us * (2**sf.consecutive_timeouts)
        self._push(fire_at, EventKind.RTO_FIRE, (sf.id, timer.rto_seq))

    def _cancel_rto(self, sf: SubflowState) -> None:
        timer = self._timers[sf.id]
        timer.rto_seq += 1
        timer.armed_at_us = None

    def _schedule_probe(self, sf: SubflowState) -> None:
        timer = self._timers[sf.id]
        timer.probe_seq += 1
        self._push(
            self.now_us + self.config.probe_interval_us,
            EventKind.PROBE_DUE,
            (sf.id, timer.probe_seq),
        )

    def _record_flag(self, sf: SubflowState) -> None:
        self._flag_log.append((self.now_us, sf.id, sf.low_prio))

    def _pump(self) -> None:
        """Send MSS segments while the scheduler offers a sub-flow."""
        cfg = self.config
        while True:
            decision = select(self.sender, cfg.mss, cfg.window_bytes)
            if decision.chosen is None:
                return
            sf = self.sender.subflow_by_id(decision.chosen)
            self._send_segment(sf, cfg.mss)

    # ------------------------------------------------------------------ #
    # event handlers

    def _on_segment_arrival(self, payload: tuple) -> None:
        flow_id, nbytes, epoch, sent_us, options, is_probe = payload
        sf = self.sender.subflow_by_id(flow_id)
        link = self.link_for(sf.pair())
        if link.epoch != epoch or not link.up:
            return  # dropped on a changed or down link
        for opt in options:
            sockopt.apply_remote_mp_prio(self.receiver, opt, received_on=flow_id)
        ack_at = self.now_us + link.spec.one_way_delay_ms * US_PER_MS
        self._push(
            ack_at,
            EventKind.ACK_ARRIVAL,
            (flow_id, nbytes, link.epoch, sent_us, is_probe),
        )

    def _on_ack_arrival(self, payload: tuple) -> None:
        flow_id, nbytes, epoch, sent_us, is_probe = payload
        sf = self.sender.subflow_by_id(flow_id)
        link = self.link_for(sf.pair())
        if link.epoch != epoch or not link.up:
            return
        if not sf.alive:
            return  # late ack for a sub-flow already declared dead
        sample = self.now_us - sent_us
        sf.srtt_us = sample if sf.srtt_us == 0 else (7 * sf.srtt_us + sample) // 8
        sf.consecutive_timeouts = 0
        timer = self._timers[sf.id]
        if is_probe:
            timer.probe_outstanding = False
        else:
            sf.inflight_bytes -= nbytes
            bucket = self.now_us // self.bucket_us
            key = (bucket, flow_id)
            self._acked[key] = self._acked.get(key, 0) + nbytes
        self._cancel_rto(sf)
        if sf.inflight_bytes > 0 or timer.probe_outstanding:
            self._arm_rto(sf)
        self._pump()
        if sf.alive and sf.inflight_bytes == 0 and not timer.probe_outstanding:
            self._schedule_probe(sf)

    def _on_rto_fire(self, payload: tuple) -> None:
        flow_id, rto_seq = payload
        sf = self.sender.subflow_by_id(flow_id)
        timer = self._timers[flow_id]
        if not sf.alive or timer.rto_seq != rto_seq or timer.armed_at_us is None:
            return
        sf.consecutive_timeouts += 1
        if sf.consecutive_timeouts >= self.config.rto_death_timeouts:
            self._kill(sf)
            return
        fire_at = timer.armed_at_us + timer.base_us * (2**sf.consecutive_timeouts)
        self._push(fire_at, EventKind.RTO_FIRE, (flow_id, rto_seq))

    def _kill(self, sf: SubflowState) -> None:
        sf.alive = False
        sf.died_us = self.now_us
        sf.inflight_bytes = 0  # in-flight data goes back to the backlog
        timer = self._timers[sf.id]
        timer.probe_outstanding = False
        timer.probe_seq += 1
        self._cancel_rto(sf)
        recv_sf = self.receiver.subflow_by_id(sf.id)
        if recv_sf is not None:
            recv_sf.alive = False
        pair = sf.pair()
        if pair not in self._reestablishing:
            self._reestablishing.add(pair)
            self._push(
                self.now_us + self.config.reestablish_interval_us,
                EventKind.REESTABLISH_ATTEMPT,
                (pair,),
            )
        self._pump()

    def _on_probe_due(self, payload: tuple) -> None:
        flow_id, probe_seq = payload
        sf = self.sender.subflow_by_id(flow_id)
        timer = self._timers[flow_id]
        if not sf.alive or timer.probe_seq != probe_seq:
            return
        if sf.inflight_bytes > 0 or timer.probe_outstanding:
            return  # data traffic is already exercising the path
        timer.probe_outstanding = True
        self._send_segment(sf, 0, is_probe=True)

    def _on_reestablish(self, payload: tuple) -> None:
        (pair,) = payload
        if self.sender.alive_subflow_on(pair) is not None:
            self._reestablishing.discard(pair)
            return
        link = self.link_for(pair)
        if not link.up:
            self._push(
                self.now_us + self.config.reestablish_interval_us,
                EventKind.REESTABLISH_ATTEMPT,
                (pair,),
            )
            return
        self._reestablishing.discard(pair)
        self._open_on_pair(pair)

    def _open_on_pair(self, pair: InterfacePair) -> SubflowState:
        port = PORT_BASE + self.sender.next_id
        src = EndpointAddress(pair.family, pair.src, port)
        dst = EndpointAddress(pair.family, pair.dst, port)
        new_id = open_subflow(self.sender, (src, dst))
        sf = self.sender.subflow_by_id(new_id)
        sf.created_us = self.now_us
        self._timers[new_id] = _FlowTimer()
        self._record_flag(sf)
        # The receiver mirrors the new sub-flow under the same id; its birth
        # priority travels with the join (stand-in for the handshake's
        # backup bit).
        mirror_id = open_subflow(self.receiver, (dst, src))
        recv_sf = self.receiver.subflow_by_id(mirror_id)
        recv_sf.low_prio = sf.low_prio
        self._pump()
        if sf.alive and sf.inflight_bytes == 0:
            self._schedule_probe(sf)
        return sf

    def _on_action(self, payload: tuple) -> None:
        (action,) = payload
        before = {sf.id: sf.low_prio for sf in self.sender.subflows}
        action(self)
        for sf in self.sender.subflows:
            if before.get(sf.id) != sf.low_prio:
                self._record_flag(sf)
        self._pump()

    # ------------------------------------------------------------------ #
    # main loop and report

    def _bootstrap(self, _sim: "Simulation") -> None:
        # Runs at t=0 after any t=0 scenario actions (which were scheduled
        # earlier and sort first), so e.g. enabling the primary-path-only
        # scheduler "just after socket creation" precedes the first segment.
        self._pump()
        for sf in self.sender.subflows:
            if sf.alive and sf.inflight_bytes == 0:
                self._schedule_probe(sf)

    def run(self) -> TimelineReport:
        if self._finished:
            raise RuntimeError("a Simulation instance runs only once")
        self._finished = True
        self._push(0, EventKind.APP_ACTION, (self._bootstrap,))
        handlers = {
            EventKind.SEGMENT_ARRIVAL: self._on_segment_arrival,
            EventKind.ACK_ARRIVAL: self._on_ack_arrival,
            EventKind.RTO_FIRE: self._on_rto_fire,
            EventKind.PROBE_DUE: self._on_probe_due,
            EventKind.REESTABLISH_ATTEMPT: self._on_reestablish,
            EventKind.APP_ACTION: self._on_action,
            EventKind.LINK_CHANGE: self._on_action,
        }
        while self._heap:
            at_us, _, kind, payload = heapq.heappop(self._heap)
            if at_us >= self.duration_us:
                break
            self.now_us = at_us
            handlers[kind](payload)
        return self._build_report()

    def _flag_at(self, flow_id: int, at_us: int) -> bool:
        flag = False
        for t, fid, low in self._flag_log:
            if fid == flow_id and t <= at_us:
                flag = low
        return flag

    def _build_report(self) -> TimelineReport:
        rows: List[ThroughputBucket] = []
        n_buckets = -(-self.duration_us // self.bucket_us)  # ceil
        for bucket in range(n_buckets):
            start_us = bucket * self.bucket_us
            end_us = min(start_us + self.bucket_us, self.duration_us)
            for sf in self.sender.subflows:
                born_before_end = sf.created_us < end_us
                died = sf.died_us
                alive_past_start = died is None or died > start_us
                if not (born_before_end and alive_past_start):
                    continue
                rows.append(
                    ThroughputBucket(
                        bucket_start_ms=start_us // US_PER_MS,
                        subflow_id=sf.id,
                        bytes_acked=self._acked.get((bucket, sf.id), 0),
                        low_prio=self._flag_at(sf.id, end_us),
                        alive=died is None or died >= end_us,
                    )
                )
        rows.sort(key=lambda r: (r.bucket_start_ms, r.subflow_id))
        genealogy = [
            SubflowRecord(
                subflow_id=sf.id,
                pair=sf.pair(),
                created_ms=sf.created_us // US_PER_MS,
                died_ms=None if sf.died_us is None else sf.died_us // US_PER_MS,
            )
            for sf in sorted(self.sender.subflows, key=lambda s: s.id)
        ]
        return TimelineReport(
            bucket_ms=self.bucket_ms,
            duration_ms=self.duration_ms,
            rows=rows,
            subflow_genealogy=genealogy,
        )


def mirror_connection(conn: ConnectionState) -> ConnectionState:
    """The receiver-side view: same sub-flow ids, reversed tuples."""
    mirror = new_connection(conn.remote_addrs, conn.local_addrs, conn.scheduler)
    mirror.subflows.clear()
    for sf in conn.subflows:
        mirror.subflows.append(
            SubflowState(id=sf.id, src=sf.dst, dst=sf.src, low_prio=sf.low_prio)
        )
    mirror.next_id = conn.next_id
    return mirror


def run(
    sender: ConnectionState,
    receiver: ConnectionState,
    links: List[LinkSpec],
    actions: List[Tuple[int, Callable[[Simulation], None], bool]],
    duration_ms: int,
    bucket_ms: int = 1000,
    config: SimConfig = SimConfig(),
) -> TimelineReport:
    """Convenience wrapper: schedule ``(at_ms, action, is_link_change)``
    triples on a fresh Simulation and run it to completion."""
    sim = Simulation(sender, receiver, links, duration_ms, bucket_ms, config)
    for at_ms, action, link_change in actions:
        sim.schedule_action(at_ms, action, link_change=link_change)
    return sim.run()
