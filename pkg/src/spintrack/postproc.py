"""Ring buffer averaging and RTT classification.

Both run per packet on the data path and therefore avoid division. The
mean is only computed by :func:`mean_rtt`, which belongs to the reader side.
"""

import csv
from dataclasses import dataclass
from typing import Optional

from .tracker import Register

MAX_CLASSES = 8
WARMUP = "warmup"
DEFAULT_RING_SIZE = 4
DEFAULT_GREASED_BELOW = 5  # quanta, ~5.24 ms


class RingState:
    """Last ``size`` RTTs of a flow plus their running sum.

    Three registers, updated in this order: index/fill, entries, sum.
    """

    def __init__(self, size: int = DEFAULT_RING_SIZE):
        if size < 1:
            raise ValueError("ring size must be >= 1")
        self.size = size
        self.position = Register((0, 0))  # (index, fill)
        self.slots = Register([0] * size)
        self.total = Register(0)

    @property
    def index(self) -> int:
        return self.position.value[0]

    @property
    def fill(self) -> int:
        return self.position.value[1]

    @property
    def entries(self) -> list:
        return list(self.slots.value)

    @property
    def sum(self) -> int:
        return self.total.value

    @property
    def full(self) -> bool:
        return self.fill == self.size

    def registers(self):
        return {"ring_index": self.position, "ring_entries": self.slots, "ring_sum": self.total}

    @classmethod
    def from_entries(cls, entries, size: Optional[int] = None) -> "RingState":
        ring = cls(size or max(len(entries), 1))
        for v in entries:
            ring_push(ring, v)
        return ring


@dataclass(frozen=True)
class RingView:
    """Ring metadata handed from :func:`ring_push` to later stages.

    Classification works on this view so the ring registers are not read a
    second time in the same packet.
    """

    evicted: Optional[int]
    sum: int
    fill: int
    size: int

    @property
    def full(self) -> bool:
        return self.fill == self.size


def ring_push(ring: RingState, rtt: int) -> RingView:
    """Store ``rtt`` at the current index and report the evicted value and new sum."""
    size = ring.size

    def advance(value):
        index, fill = value
        was_full = fill == size
        new_fill = fill if was_full else fill + 1
        return ((index + 1) % size, new_fill), (index, was_full, new_fill)

    index, was_full, fill = ring.position.execute(advance)

    def swap(entries):
        old = entries[index]
        entries[index] = rtt
        return entries, old

    old = ring.slots.execute(swap)
    evicted = old if was_full else None

    def accumulate(total):
        total += rtt - (evicted or 0)
        return total, total

    return RingView(evicted, ring.total.execute(accumulate), fill, size)


def mean_rtt(ring: RingState) -> Optional[int]:
    if ring.fill == 0:
        return None
    return ring.sum // ring.fill


@dataclass(frozen=True)
class ClassRule:
    """Inclusive RTT bounds (quanta) and bounds on RTT relative to the ring mean (percent)."""

    name: str
    rtt_min: Optional[int] = None
    rtt_max: Optional[int] = None
    ratio_min_pct: Optional[int] = None
    ratio_max_pct: Optional[int] = None

    @property
    def needs_ring(self) -> bool:
        return self.ratio_min_pct is not None or self.ratio_max_pct is not None

    @property
    def catch_all(self) -> bool:
        return self.rtt_min is None and self.rtt_max is None and not self.needs_ring

    def matches(self, rtt: int, ring) -> bool:
        if self.rtt_min is not None and rtt < self.rtt_min:
            return False
        if self.rtt_max is not None and rtt > self.rtt_max:
            return False
        if self.needs_ring:
            if not ring.full:
                return False
            # ratio_min/100 <= rtt / (sum/W) <= ratio_max/100, cross-multiplied
            scaled = 100 * ring.size * rtt
            if self.ratio_min_pct is not None and scaled < self.ratio_min_pct * ring.sum:
                return False
            if self.ratio_max_pct is not None and scaled > self.ratio_max_pct * ring.sum:
                return False
        return True


class ClassConfig:
    def __init__(self, rules):
        rules = tuple(rules)
        if not 1 <= len(rules) <= MAX_CLASSES:
            raise ValueError(f"between 1 and {MAX_CLASSES} classes required, got {len(rules)}")
        if not rules[-1].catch_all:
            raise ValueError("the last class must be a catch-all rule")
        names = [r.name for r in rules]
        if len(set(names)) != len(names) or WARMUP in names:
            raise ValueError(f"class names must be unique and not {WARMUP!r}")
        self.rules = rules

    @property
    def names(self) -> list:
        return [r.name for r in self.rules] + [WARMUP]

    @classmethod
    def default(cls, greased_below: int = DEFAULT_GREASED_BELOW) -> "ClassConfig":
        return cls([
            ClassRule("greased", rtt_max=greased_below - 1),
            ClassRule("stable", ratio_min_pct=90, ratio_max_pct=110),
            ClassRule("unstable"),
        ])

    @classmethod
    def load(cls, path) -> "ClassConfig":
        """Rules ``name, rtt_min, rtt_max, ratio_min_pct, ratio_max_pct``; ``*`` leaves a bound open."""
        rules = []
        with open(path, newline="") as fh:
            rows = csv.reader(line for line in fh if line.strip() and not line.lstrip().startswith("#"))
            for row in rows:
                if len(row) != 5:
                    raise ValueError(f"{path}: class rule needs 5 fields: {row}")
                name, *bounds = [f.strip() for f in row]
                rules.append(ClassRule(name, *[None if b == "*" else int(b) for b in bounds]))
        return cls(rules)

    def __eq__(self, other):
        return isinstance(other, ClassConfig) and self.rules == other.rules


class ClassCounters:
    """Hit counter per class, with the warm-up bucket last."""

    def __init__(self, n_classes: int):
        self.counts = Register([0] * (n_classes + 1))

    @property
    def hits(self) -> list:
        return list(self.counts.value)

    def registers(self):
        return {"class_counters": self.counts}


def classify(rtt: int, ring, cfg: ClassConfig, counters: ClassCounters) -> str:
    """First matching rule wins; its counter is incremented.

    ``ring`` is the :class:`RingView` returned by :func:`ring_push` (a
    :class:`RingState` also works off the data path).

    While the ring is not yet full, rules that compare against the mean and
    the catch-all are skipped, and an unmatched RTT lands in the warm-up bucket.
    """
    warm = ring.full
    slot = len(cfg.rules)
    for i, rule in enumerate(cfg.rules):
        if not warm and (rule.needs_ring or rule.catch_all):
            continue
        if rule.matches(rtt, ring):
            slot = i
            break

    def bump(hits):
        hits[slot] += 1
        return hits, None

    counters.counts.execute(bump)
    return cfg.names[slot]
