"""
Reordering patterns and phase-change protection
===============================================

Old-flank packets slipped in after a spin flip fool a tracker that reacts
to every change. Requiring N packets of the new value before accepting a
flip (v1 counts them in total, v2 in a row) filters some of the patterns.
"""

from statistics import fmean

from spintrack.pipeline import Pipeline
from spintrack.simgen import Pattern, SimConfig, simulate
from spintrack.tracker import DetectionMode

modes = [DetectionMode.naive(), DetectionMode.v1(3), DetectionMode.v2(3)]

print(f"{'pattern':8s}" + "".join(f"{str(m):>18s}" for m in modes))
for pattern in Pattern:
    events, truth = simulate(SimConfig(pattern=pattern, pkt_rate=1000))
    cells = []
    for mode in modes:
        reports = Pipeline(mode=mode).run_events(events)
        mean = fmean(r.rtt_quanta for r in reports) if reports else float("nan")
        cells.append(f"{len(reports):5d} x {mean:6.2f} q")
    print(f"{pattern.value:8s}" + "".join(f"{c:>18s}" for c in cells))

print(f"ground truth: {len(truth.flanks)} flanks, {truth.mean_quanta():.2f} q")

# The class counters flag what the filters let through: for a greased
# flow almost nothing lands in "stable".
events, _ = simulate(SimConfig(pattern=Pattern.GREASED, pkt_rate=2000))
last = Pipeline().run_events(events)[-1]
print("greased flow, class counters:", dict(zip(["greased", "stable", "unstable", "warmup"], last.counters)))
