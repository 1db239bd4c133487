"""Per-flow spin phase detection and RTT calculation.

State lives in :class:`Register` cells that can only be changed through a
single read-modify-write ``execute`` call, mirroring how a switch pipeline
touches each register once per packet. ``process_packet`` visits the
register groups in pipeline order: spin value/counter, flip timestamp, RTT.
"""

import enum
from dataclasses import dataclass, field
from typing import Optional

QUANTUM_SHIFT = 20
QUANTUM_NS = 1 << QUANTUM_SHIFT  # 1.048576 ms
TS_BITS = 16
TS_MASK = (1 << TS_BITS) - 1
WRAP_NS = 1 << (QUANTUM_SHIFT + TS_BITS)  # ~68.7 s
TIMESTAMP_MASK = (1 << 48) - 1


def slice_timestamp(t_ns: int) -> int:
    """Bits 20..35 of the 48-bit nanosecond clock."""
    return (t_ns >> QUANTUM_SHIFT) & TS_MASK


def rtt_delta(now: int, prev: int) -> int:
    return (now - prev) & TS_MASK


def quanta_to_ms(quanta: int) -> float:
    return quanta * QUANTUM_NS / 1e6


class Register:
    __slots__ = ("value", "accesses")

    def __init__(self, value):
        self.value = value
        self.accesses = 0

    def execute(self, action):
        """Run ``action(old) -> (new, result)`` as one read-modify-write."""
        self.value, result = action(self.value)
        self.accesses += 1
        return result

    def __repr__(self):
        return f"Register({self.value!r})"


class ModeKind(enum.Enum):
    NAIVE = "naive"
    V1 = "v1"
    V2 = "v2"


@dataclass(frozen=True)
class DetectionMode:
    kind: ModeKind = ModeKind.NAIVE
    threshold: int = 1

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError("reordering threshold must be >= 1")
        if self.kind is ModeKind.NAIVE and self.threshold != 1:
            object.__setattr__(self, "threshold", 1)

    @classmethod
    def naive(cls):
        return cls(ModeKind.NAIVE, 1)

    @classmethod
    def v1(cls, n: int = 3):
        return cls(ModeKind.V1, n)

    @classmethod
    def v2(cls, n: int = 3):
        return cls(ModeKind.V2, n)

    def __str__(self):
        return f"{self.kind.value}:{self.threshold}"

    @classmethod
    def parse(cls, text: str) -> "DetectionMode":
        kind, _, n = text.partition(":")
        return cls(ModeKind(kind), int(n) if n else 1)


# phases of the spin register
UNINIT, FRESH, ARMED = 0, 1, 2

# spin stage outcomes
_INIT, _FIRST, _FLIP = "init", "first", "flip"


@dataclass
class FlowState:
    # (phase, spin_value, flank_count)
    spin: Register = field(default_factory=lambda: Register((UNINIT, 0, 0)))
    # (Ts16 of last flip, full capture ns of last flip)
    timestamp: Register = field(default_factory=lambda: Register((0, None)))
    # (last rtt or None, stale)
    rtt: Register = field(default_factory=lambda: Register((None, False)))

    @property
    def initialized(self) -> bool:
        return self.spin.value[0] != UNINIT

    @property
    def spin_value(self) -> int:
        return self.spin.value[1]

    @property
    def flank_count(self) -> int:
        return self.spin.value[2]

    @property
    def last_flip_ts(self) -> int:
        return self.timestamp.value[0]

    @property
    def last_rtt(self) -> Optional[int]:
        return self.rtt.value[0]

    @property
    def stale(self) -> bool:
        return self.rtt.value[1]

    def registers(self):
        return {"spin": self.spin, "timestamp": self.timestamp, "rtt": self.rtt}


@dataclass(frozen=True)
class Measurement:
    rtt: int
    at: int
    t_ns: Optional[int] = None
    flow: object = None
    mode: DetectionMode = DetectionMode()
    stale: bool = False

    @property
    def rtt_ms(self) -> float:
        return quanta_to_ms(self.rtt)


def process_packet(state: FlowState, spin, ts: int, mode: DetectionMode, *, t_ns: Optional[int] = None,
                   flow=None) -> Optional[Measurement]:
    """Advance ``state`` by one packet and return a Measurement on a new spin phase.

    ``ts`` is the sliced 16-bit timestamp. When the full capture time ``t_ns``
    is given as well, measurements spanning more than one timestamp wrap are
    flagged stale (the reported value still comes from the 16-bit path).
    The first phase change after a flow appears only arms the timestamp.
    """
    spin = 1 if spin else 0
    n = mode.threshold
    resets = mode.kind is ModeKind.V2

    def spin_stage(value):
        phase, current, count = value
        if phase == UNINIT:
            return (FRESH, spin, 0), _INIT
        if spin == current:
            return (phase, current, 0 if resets else count), None
        count += 1
        if count >= n:
            return (ARMED, spin, 0), (_FIRST if phase == FRESH else _FLIP)
        return (phase, current, count), None

    outcome = state.spin.execute(spin_stage)
    if outcome is None:
        return None

    prev_ts, prev_ns = state.timestamp.execute(lambda old: ((ts, t_ns), old))
    if outcome != _FLIP:
        return None

    rtt = rtt_delta(ts, prev_ts)
    stale = t_ns is not None and prev_ns is not None and t_ns - prev_ns >= WRAP_NS
    state.rtt.execute(lambda old: ((rtt, stale), None))
    return Measurement(rtt=rtt, at=ts, t_ns=t_ns, flow=flow, mode=mode, stale=stale)
