"""
Tracking a clean spin bit signal
================================

Simulate flows with a constant RTT, track them in naive mode and compare
the reported RTTs with the simulator's ground truth.
"""

from statistics import fmean

from spintrack.pipeline import Pipeline
from spintrack.simgen import SimConfig, simulate
from spintrack.tracker import quanta_to_ms

# One flow per RTT setting, 250 packets per second for four seconds.
for rtt_ms in (20, 40, 80):
    events, truth = simulate(SimConfig(rtt_schedule=[(0, rtt_ms)], duration=4.0))
    reports = Pipeline().run_events(events)

    # RTTs come out in timestamp quanta of 2^20 ns.
    measured = fmean(r.rtt_quanta for r in reports)
    print(f"{rtt_ms:3d} ms: {len(reports)} readings, mean {measured:.2f} q = {quanta_to_ms(measured):.2f} ms"
          f" (truth {truth.mean_quanta():.2f} q)")

# The first flip of every flow only arms the timestamp, so a flow with
# F flanks yields F - 1 readings.
