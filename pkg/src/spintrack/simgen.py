"""Deterministic spin bit traffic as seen at the client side.

The client flips the spin bit once per RTT, so the observed client-to-server
direction shows a square wave whose phases each last one RTT. Packets are
sent at a constant rate. Reordering patterns and greasing are applied on top
of the clean stream; the ground truth always comes from the RTT schedule.
"""

import bisect
import enum
import json
import random
from dataclasses import dataclass, field, replace
from typing import Optional

from .flowid import FiveTuple
from .tracker import QUANTUM_NS
from .wire import build_short_header


class InvalidConfig(ValueError):
    pass


class Pattern(enum.Enum):
    NONE = "none"
    GREASED = "greased"
    P1 = "p1"
    P2 = "p2"
    P3 = "p3"


DEFAULT_TUPLE = FiveTuple("10.0.0.1", 50000, "10.0.0.2", 443)


@dataclass
class SimConfig:
    rtt_schedule: list = field(default_factory=lambda: [(0.0, 40.0)])  # (start_s, rtt_ms)
    pkt_rate: float = 250.0
    duration: float = 2.0
    seed: int = 0
    pattern: Pattern = Pattern.NONE
    start_ns: int = 0
    five_tuple: FiveTuple = DEFAULT_TUPLE
    dcid: bytes = b""
    payload: bool = True

    def validate(self):
        if not self.rtt_schedule:
            raise InvalidConfig("rtt schedule is empty")
        times = [t for t, _ in self.rtt_schedule]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidConfig("rtt schedule times must be strictly increasing")
        if any(rtt <= 0 for _, rtt in self.rtt_schedule):
            raise InvalidConfig("rtt values must be positive")
        if self.pkt_rate <= 0:
            raise InvalidConfig("packet rate must be positive")
        if self.duration < 0:
            raise InvalidConfig("duration must not be negative")
        if not 0 <= self.start_ns < 1 << 48:
            raise InvalidConfig("start_ns must fit the 48-bit clock")

    def rtt_ns_at(self, offset_ns: int) -> int:
        """RTT active ``offset_ns`` after the start of the run."""
        starts = [round(t * 1e9) for t, _ in self.rtt_schedule]
        i = max(bisect.bisect_right(starts, offset_ns) - 1, 0)
        return round(self.rtt_schedule[i][1] * 1e6)

    @classmethod
    def load(cls, path) -> "SimConfig":
        """Scenario file: a JSON object with SimConfig field names."""
        with open(path) as fh:
            d = json.load(fh)
        return cls.from_dict(d)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown scenario keys: {sorted(unknown)}")
        try:
            if "rtt_schedule" in d:
                d["rtt_schedule"] = [(float(t), float(r)) for t, r in d["rtt_schedule"]]
            if "pattern" in d:
                d["pattern"] = Pattern(str(d["pattern"]).lower())
            if "five_tuple" in d and not isinstance(d["five_tuple"], FiveTuple):
                d["five_tuple"] = FiveTuple.parse(d["five_tuple"])
            if "dcid" in d and isinstance(d["dcid"], str):
                d["dcid"] = bytes.fromhex(d["dcid"])
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from exc
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class PacketEvent:
    t_ns: int
    five_tuple: FiveTuple
    spin: int
    payload: Optional[bytes] = None
    reordered: bool = False


@dataclass(frozen=True)
class Flank:
    t_ns: int  # true flip time at the client
    rtt_ns: int  # length of the phase that ends here

    @property
    def rtt_quanta(self) -> float:
        return self.rtt_ns / QUANTUM_NS


@dataclass
class GroundTruth:
    flanks: list = field(default_factory=list)

    @property
    def rtt_quanta(self) -> list:
        return [f.rtt_quanta for f in self.flanks]

    def mean_quanta(self) -> Optional[float]:
        if not self.flanks:
            return None
        return sum(self.rtt_quanta) / len(self.flanks)

    def to_lines(self):
        for f in self.flanks:
            yield json.dumps({"flank_ns": f.t_ns, "rtt_ns": f.rtt_ns, "rtt_quanta": f.rtt_quanta})


def _flank_times(cfg: SimConfig, end_offset: int) -> list:
    flanks = []
    t = 0
    while True:
        rtt = cfg.rtt_ns_at(t)
        t += rtt
        if t > end_offset:
            return flanks
        flanks.append((t, rtt))


def gen_clean_flow(cfg: SimConfig):
    """Return ``(events, truth)`` for an undisturbed spin signal."""
    cfg.validate()
    gap = round(1e9 / cfg.pkt_rate)
    span = round(cfg.duration * 1e9)
    n_packets = 0 if span <= 0 else span // gap + 1
    if n_packets == 0:
        return [], GroundTruth()
    flanks = _flank_times(cfg, span)
    flank_offsets = [t for t, _ in flanks]

    events = []
    truth = GroundTruth()
    prev_phase = 0
    for i in range(n_packets):
        offset = i * gap
        phase = bisect.bisect_right(flank_offsets, offset)
        spin = phase & 1
        if phase != prev_phase:
            for k in range(prev_phase, phase):
                t, rtt = flanks[k]
                truth.flanks.append(Flank(cfg.start_ns + t, rtt))
        prev_phase = phase
        events.append(_event(cfg, cfg.start_ns + offset, spin, i))
    return events, truth


def _event(cfg: SimConfig, t_ns: int, spin: int, pn: int, reordered: bool = False) -> PacketEvent:
    payload = build_short_header(bool(spin), cfg.dcid, pn) if cfg.payload else None
    return PacketEvent(t_ns, cfg.five_tuple, spin, payload, reordered)


def _with_spin(ev: PacketEvent, spin: int, t_ns: int) -> PacketEvent:
    payload = None
    if ev.payload is not None:
        payload = bytes([(ev.payload[0] & ~0x20) | (0x20 if spin else 0)]) + ev.payload[1:]
    return PacketEvent(t_ns, ev.five_tuple, spin, payload, True)


# per pattern: positions within the new phase after which old-value packets go, and how many
_INSERTIONS = {
    Pattern.P1: {0: 1},
    Pattern.P2: {0: 1, 1: 1, 2: 1},
    Pattern.P3: {2: 3},
}


def apply_pattern(events: list, pattern: Pattern, seed: int = 0) -> list:
    """Corrupt a clean stream with greasing or one of the reordering patterns.

    Inserted packets are copies of their predecessor carrying the old spin
    value, spread evenly inside the gap to the next packet.
    """
    pattern = Pattern(pattern)
    if pattern is Pattern.NONE or not events:
        return list(events)
    if pattern is Pattern.GREASED:
        rng = random.Random(seed)
        return [replace(_with_spin(ev, rng.getrandbits(1), ev.t_ns), reordered=False) for ev in events]

    plan = _INSERTIONS[pattern]
    out = []
    pos_in_phase = None  # None until the first flank
    for i, ev in enumerate(events):
        if i > 0 and ev.spin != events[i - 1].spin:
            pos_in_phase = 0
        elif pos_in_phase is not None:
            pos_in_phase += 1
        out.append(ev)
        count = plan.get(pos_in_phase, 0) if pos_in_phase is not None else 0
        if not count:
            continue
        if i + 1 < len(events):
            gap = events[i + 1].t_ns - ev.t_ns
        else:
            gap = ev.t_ns - events[i - 1].t_ns
        if gap <= count:
            raise InvalidConfig("packet gap too small to interleave reordered packets")
        old = 1 - ev.spin
        for k in range(1, count + 1):
            out.append(_with_spin(ev, old, ev.t_ns + gap * k // (count + 1)))
    return out


def simulate(cfg: SimConfig):
    events, truth = gen_clean_flow(cfg)
    return apply_pattern(events, cfg.pattern, cfg.seed), truth
