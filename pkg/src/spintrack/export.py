"""Measurement reports: event-based and periodic, written as JSONL or CSV."""

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .flowid import FlowId
from .tracker import DetectionMode, Measurement, quanta_to_ms

EVENT = "event"
SNAPSHOT = "snapshot"

FIELDS = ("kind", "ts_ns", "flow", "mode", "rtt_quanta", "rtt_ms", "class",
          "ring_sum", "ring_fill", "counters", "stale")


@dataclass(frozen=True)
class Report:
    kind: str
    ts_ns: int
    flow: FlowId
    mode: DetectionMode
    rtt_quanta: Optional[int]
    class_id: Optional[str] = None
    ring_sum: int = 0
    ring_fill: int = 0
    counters: tuple = field(default_factory=tuple)
    stale: bool = False

    @property
    def rtt_ms(self) -> Optional[float]:
        return None if self.rtt_quanta is None else quanta_to_ms(self.rtt_quanta)

    @property
    def ring_mean(self) -> Optional[float]:
        return self.ring_sum / self.ring_fill if self.ring_fill else None


@dataclass(frozen=True)
class EventBased:
    pass


@dataclass(frozen=True)
class Periodic:
    interval_ns: int

    def __post_init__(self):
        if self.interval_ns <= 0:
            raise ValueError("readout interval must be positive")


def event_report(m: Measurement, record, class_id: Optional[str], view=None) -> Report:
    """Report for one measurement; ``view`` is the ring state just after the push."""
    ring = view if view is not None else record.ring
    return Report(
        kind=EVENT,
        ts_ns=m.t_ns if m.t_ns is not None else 0,
        flow=record.fid,
        mode=m.mode,
        rtt_quanta=m.rtt,
        class_id=class_id,
        ring_sum=ring.sum,
        ring_fill=ring.fill,
        counters=tuple(record.counters.hits),
        stale=m.stale,
    )


def snapshot_report(record, t_ns: int, mode: DetectionMode) -> Report:
    return Report(
        kind=SNAPSHOT,
        ts_ns=t_ns,
        flow=record.fid,
        mode=mode,
        rtt_quanta=record.state.last_rtt,
        ring_sum=record.ring.sum,
        ring_fill=record.ring.fill,
        counters=tuple(record.counters.hits),
        stale=record.state.stale,
    )


def periodic_snapshot(records: Iterable, t_ns: int, mode: DetectionMode) -> list:
    """Read out every flow record at capture time ``t_ns``."""
    return [snapshot_report(r, t_ns, mode) for r in records]


class ReadoutClock:
    """Readout instants ``start + k * interval`` on the capture clock."""

    def __init__(self, interval_ns: int):
        if interval_ns <= 0:
            raise ValueError("readout interval must be positive")
        self.interval_ns = interval_ns
        self.next_ns = None

    def due(self, t_ns: int) -> list:
        if self.next_ns is None:
            self.next_ns = t_ns + self.interval_ns
            return []
        out = []
        while self.next_ns <= t_ns:
            out.append(self.next_ns)
            self.next_ns += self.interval_ns
        return out


def report_to_dict(r: Report) -> dict:
    return {
        "kind": r.kind,
        "ts_ns": r.ts_ns,
        "flow": str(r.flow),
        "mode": str(r.mode),
        "rtt_quanta": r.rtt_quanta,
        "rtt_ms": r.rtt_ms,
        "class": r.class_id,
        "ring_sum": r.ring_sum,
        "ring_fill": r.ring_fill,
        "counters": list(r.counters),
        "stale": r.stale,
    }


def serialize_report(r: Report) -> str:
    return json.dumps(report_to_dict(r), separators=(",", ":"))


def parse_report(line: str) -> Report:
    d = json.loads(line)
    if not isinstance(d, dict) or set(d) != set(FIELDS):
        raise ValueError(f"report keys do not match {FIELDS}")
    if d["kind"] not in (EVENT, SNAPSHOT):
        raise ValueError(f"unknown report kind {d['kind']!r}")
    return Report(
        kind=d["kind"],
        ts_ns=int(d["ts_ns"]),
        flow=FlowId.parse(d["flow"]),
        mode=DetectionMode.parse(d["mode"]),
        rtt_quanta=None if d["rtt_quanta"] is None else int(d["rtt_quanta"]),
        class_id=d["class"],
        ring_sum=int(d["ring_sum"]),
        ring_fill=int(d["ring_fill"]),
        counters=tuple(int(c) for c in d["counters"]),
        stale=bool(d["stale"]),
    )


class JsonlWriter:
    def __init__(self, fh):
        self.fh = fh

    def write(self, reports: Iterable[Report]):
        for r in reports:
            self.fh.write(serialize_report(r) + "\n")


class CsvWriter:
    """Flat CSV with the counters exploded into ``counter_<i>`` columns."""

    def __init__(self, fh, n_counters: int):
        self.n_counters = n_counters
        columns = [f for f in FIELDS if f != "counters"] + [f"counter_{i}" for i in range(n_counters)]
        self._writer = csv.writer(fh, lineterminator="\n")
        self._writer.writerow(columns)

    def write(self, reports: Iterable[Report]):
        for r in reports:
            d = report_to_dict(r)
            counters = d.pop("counters")
            if len(counters) != self.n_counters:
                raise ValueError(f"expected {self.n_counters} counters, got {len(counters)}")
            row = ["" if v is None else v for v in d.values()]
            self._writer.writerow(row + counters)


def read_reports(path) -> list:
    """Parse a JSONL report file; errors carry the line number."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(parse_report(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise ReportParseError(f"{path}:{lineno}: {exc}", lineno) from exc
    return out


class ReportParseError(ValueError):
    def __init__(self, msg, lineno):
        super().__init__(msg)
        self.lineno = lineno
