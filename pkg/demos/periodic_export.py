"""
Event reports versus periodic readouts
======================================

Periodic readouts sample the last RTT register at a fixed interval. Long
RTTs stay in the register longer and get sampled more often, which skews
a plain average when the RTT changes.
"""

from statistics import fmean

from spintrack.export import Periodic
from spintrack.pipeline import Pipeline
from spintrack.simgen import SimConfig, simulate
from spintrack.summary import dedup_snapshots

# RTT steps from 20 ms to 80 ms after one second.
events, _ = simulate(SimConfig(rtt_schedule=[(0, 20), (1.0, 80)], duration=2.0))

reports = Pipeline().run_events(events)
print(f"event reports: {len(reports)}, mean {fmean(r.rtt_quanta for r in reports):.2f} q")

snaps = Pipeline(export=Periodic(5_000_000)).run_events(events)
valued = [r for r in snaps if r.rtt_quanta is not None]
print(f"5 ms readouts: {len(valued)}, mean {fmean(r.rtt_quanta for r in valued):.2f} q")

# Keeping only readouts whose class counters moved recovers one value per
# measurement.
dedup = dedup_snapshots(snaps)
print(f"deduplicated:  {len(dedup)}, mean {fmean(r.rtt_quanta for r in dedup):.2f} q")
