"""The full per-packet path: flow lookup, phase detection, RTT, ring buffer,
classification and reporting."""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from . import wire
from .export import EventBased, Periodic, ReadoutClock, event_report, periodic_snapshot
from .flowid import ALL_FLOWS, CidLenMap, FiveTuple, FlowId, SelectionList, flow_id, learn_cid_length
from .postproc import ClassConfig, ClassCounters, RingState, classify, ring_push
from .tracker import DetectionMode, FlowState, Measurement, process_packet, slice_timestamp, TIMESTAMP_MASK

log = logging.getLogger(__name__)

DEFAULT_CAPACITY = 10_000


@dataclass
class FlowRecord:
    """All registers of one flow table slot."""

    fid: FlowId
    state: FlowState
    ring: RingState
    counters: ClassCounters

    def registers(self) -> dict:
        regs = {}
        regs.update(self.state.registers())
        regs.update(self.ring.registers())
        regs.update(self.counters.registers())
        return regs


class FlowTable:
    """Hash-indexed slots. Colliding flows share a slot, as on hardware."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY, ring_size: int = 4, n_classes: int = 3):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.ring_size = ring_size
        self.n_classes = n_classes
        self.slots = {}
        self.collisions = 0

    def lookup(self, fid: FlowId) -> FlowRecord:
        index = fid.value % self.capacity
        rec = self.slots.get(index)
        if rec is None:
            rec = FlowRecord(fid, FlowState(), RingState(self.ring_size), ClassCounters(self.n_classes))
            self.slots[index] = rec
        elif rec.fid != fid:
            self.collisions += 1
            rec.fid = fid
        return rec

    def records(self) -> list:
        return list(self.slots.values())


@dataclass
class Stats:
    packets_in: int = 0
    tracked: int = 0
    skipped: Counter = field(default_factory=Counter)
    measurements: int = 0

    @property
    def packets_skipped(self) -> int:
        return sum(self.skipped.values())


class Pipeline:
    """Tracks spin bit RTTs for a stream of packets.

    Feed packets in capture order with :meth:`feed` (UDP payload) or
    :meth:`feed_spin` (spin value known); both return the reports produced
    by that packet. Call :meth:`finish` at the end of the capture.
    """

    def __init__(self, mode: DetectionMode = DetectionMode.naive(), ring_size: int = 4,
                 classes: Optional[ClassConfig] = None, export=EventBased(),
                 selection: SelectionList = ALL_FLOWS, cid_map: Optional[CidLenMap] = None,
                 use_cid: bool = False, capacity: int = DEFAULT_CAPACITY):
        self.mode = mode
        self.classes = classes or ClassConfig.default()
        self.export = export
        self.selection = selection
        self.cid_map = cid_map if cid_map is not None else CidLenMap()
        self.use_cid = use_cid
        self.table = FlowTable(capacity, ring_size, len(self.classes.rules))
        self.stats = Stats()
        self.clock = ReadoutClock(export.interval_ns) if isinstance(export, Periodic) else None
        self.last_ns = None

    def feed(self, t_ns: int, five_tuple: FiveTuple, payload: bytes) -> list:
        self.stats.packets_in += 1
        reports = self._tick(t_ns)
        form = wire.classify_header(payload)
        if form is wire.HeaderForm.NOT_QUIC:
            self.stats.skipped["not_quic"] += 1
            return reports
        try:
            if form is wire.HeaderForm.LONG:
                hdr = wire.parse_long_header(payload)
                if hdr.version == 0:
                    self.stats.skipped["not_quic"] += 1
                else:
                    if self.use_cid:
                        learn_cid_length(self.cid_map, five_tuple, hdr)
                    self.stats.skipped["long_header"] += 1
                return reports
            dcid_len = self.cid_map.get(five_tuple) if self.use_cid else None
            hdr = wire.parse_short_header(payload, dcid_len or 0)
        except wire.WireError as exc:
            log.debug("malformed QUIC header at %d: %s", t_ns, exc)
            self.stats.skipped["malformed"] += 1
            return reports
        fid = flow_id(five_tuple, hdr.dcid if self.use_cid else None)
        reports.extend(self._track(t_ns, fid, hdr.spin_bit))
        return reports

    def feed_spin(self, t_ns: int, five_tuple: FiveTuple, spin, fid: Optional[FlowId] = None) -> list:
        self.stats.packets_in += 1
        reports = self._tick(t_ns)
        reports.extend(self._track(t_ns, fid or flow_id(five_tuple), spin))
        return reports

    def feed_event(self, ev) -> list:
        """Simulator event; the spin value is taken as given, not parsed."""
        return self.feed_spin(ev.t_ns, ev.five_tuple, ev.spin)

    def _tick(self, t_ns: int) -> list:
        self.last_ns = t_ns
        if self.clock is None:
            return []
        reports = []
        for readout in self.clock.due(t_ns):
            reports.extend(periodic_snapshot(self.table.records(), readout, self.mode))
        return reports

    def _track(self, t_ns: int, fid: FlowId, spin) -> list:
        if fid not in self.selection:
            self.stats.skipped["not_selected"] += 1
            return []
        self.stats.tracked += 1
        rec = self.table.lookup(fid)
        t_ns &= TIMESTAMP_MASK
        m = process_packet(rec.state, spin, slice_timestamp(t_ns), self.mode, t_ns=t_ns, flow=fid)
        if m is None:
            return []
        return self._post_process(rec, m)

    def _post_process(self, rec: FlowRecord, m: Measurement) -> list:
        self.stats.measurements += 1
        view = ring_push(rec.ring, m.rtt)
        class_id = classify(m.rtt, view, self.classes, rec.counters)
        if isinstance(self.export, EventBased):
            return [event_report(m, rec, class_id, view)]
        return []

    def finish(self, until_ns: Optional[int] = None) -> list:
        """Emit readouts still due up to ``until_ns`` (default: last packet time)."""
        if self.clock is None or self.last_ns is None:
            return []
        until = self.last_ns if until_ns is None else until_ns
        reports = []
        for readout in self.clock.due(until):
            reports.extend(periodic_snapshot(self.table.records(), readout, self.mode))
        return reports

    def run_events(self, events) -> list:
        reports = []
        for ev in events:
            reports.extend(self.feed_event(ev))
        reports.extend(self.finish())
        return reports

    def run_raw(self, packets) -> list:
        """Run over RawPackets; None entries count as skipped non-UDP frames."""
        reports = []
        for pkt in packets:
            if pkt is None:
                self.stats.packets_in += 1
                self.stats.skipped["not_udp"] += 1
                continue
            reports.extend(self.feed(pkt.capture_ts, pkt.five_tuple, pkt.payload))
        reports.extend(self.finish())
        return reports
