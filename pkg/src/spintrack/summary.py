"""Reader-side statistics over report files: means, extremes, class histograms."""

from collections import Counter
from dataclasses import dataclass, field
from statistics import fmean
from typing import Optional

from .export import EVENT
from .tracker import quanta_to_ms


@dataclass
class FlowSummary:
    flow: str
    kind: str
    count: int = 0
    mean_quanta: Optional[float] = None
    min_quanta: Optional[int] = None
    max_quanta: Optional[int] = None
    dedup_count: Optional[int] = None
    dedup_mean_quanta: Optional[float] = None
    ring_mean_quanta: Optional[float] = None
    histogram: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for key in ("mean", "min", "max", "dedup_mean", "ring_mean"):
            q = d[f"{key}_quanta"]
            d[f"{key}_ms"] = None if q is None else quanta_to_ms(q)
        return d


@dataclass
class SummaryStats:
    flows: list = field(default_factory=list)
    count: int = 0
    mean_quanta: Optional[float] = None
    histogram: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "flows": [f.to_dict() for f in self.flows],
            "count": self.count,
            "mean_quanta": self.mean_quanta,
            "mean_ms": None if self.mean_quanta is None else quanta_to_ms(self.mean_quanta),
            "histogram": self.histogram,
        }

    def format(self) -> str:
        lines = []
        for f in self.flows:
            lines.append(f"flow {f.flow} ({f.kind}): {f.count} readings")
            if f.mean_quanta is not None:
                lines.append(f"  mean {f.mean_quanta:.2f} q ({quanta_to_ms(f.mean_quanta):.2f} ms)"
                             f"  min {f.min_quanta} q  max {f.max_quanta} q")
            if f.dedup_mean_quanta is not None:
                lines.append(f"  deduplicated: {f.dedup_count} readings, mean {f.dedup_mean_quanta:.2f} q"
                             f" ({quanta_to_ms(f.dedup_mean_quanta):.2f} ms)")
            if f.ring_mean_quanta is not None:
                lines.append(f"  ring buffer mean {f.ring_mean_quanta:.2f} q")
            if f.histogram:
                lines.append("  classes: " + ", ".join(f"{k}={v}" for k, v in f.histogram.items()))
        lines.append(f"total: {len(self.flows)} flows, {self.count} readings")
        if self.mean_quanta is not None:
            lines.append(f"  mean {self.mean_quanta:.2f} q ({quanta_to_ms(self.mean_quanta):.2f} ms)")
        return "\n".join(lines)


def dedup_snapshots(reports) -> list:
    """Keep snapshots that show a new measurement (class counter total changed)."""
    out = []
    last_total = 0
    for r in reports:
        total = sum(r.counters)
        if total != last_total and r.rtt_quanta is not None:
            out.append(r)
        last_total = total
    return out


def summarize(reports: list) -> SummaryStats:
    by_flow = {}
    for r in reports:
        by_flow.setdefault(str(r.flow), []).append(r)

    stats = SummaryStats()
    all_values = []
    global_hist = Counter()
    for flow, rs in by_flow.items():
        events = [r for r in rs if r.kind == EVENT]
        kind = "event" if len(events) == len(rs) else ("snapshot" if not events else "mixed")
        fs = FlowSummary(flow, kind)
        values = [r.rtt_quanta for r in rs if r.rtt_quanta is not None]
        fs.count = len(values)
        if values:
            fs.mean_quanta = fmean(values)
            fs.min_quanta = min(values)
            fs.max_quanta = max(values)
        ring = [r.ring_sum / r.ring_fill for r in rs if r.ring_fill]
        if ring:
            fs.ring_mean_quanta = fmean(ring)
        if events:
            hist = Counter(r.class_id for r in events)
        else:
            hist = Counter({f"class_{i}": n for i, n in enumerate(rs[-1].counters)})
        if kind != "event":
            dedup = dedup_snapshots([r for r in rs if r.kind != EVENT])
            fs.dedup_count = len(dedup)
            if dedup:
                fs.dedup_mean_quanta = fmean(r.rtt_quanta for r in dedup)
        fs.histogram = dict(hist)
        global_hist.update(hist)
        all_values.extend(values)
        stats.flows.append(fs)
    stats.count = len(all_values)
    stats.mean_quanta = fmean(all_values) if all_values else None
    stats.histogram = dict(global_hist)
    return stats
