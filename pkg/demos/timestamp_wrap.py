"""
16-bit timestamps across the wrap
=================================

Each flow stores bits 20..35 of the nanosecond clock. Differences taken
modulo 2^16 stay correct across a wrap as long as the true gap is shorter
than 2^36 ns (about 68.7 s).
"""

from spintrack.tracker import QUANTUM_NS, WRAP_NS, rtt_delta, slice_timestamp

print(f"one quantum = {QUANTUM_NS / 1e6:.6f} ms, wrap period = {WRAP_NS / 1e9:.2f} s")

# A 40 ms gap that straddles the wrap.
t0 = WRAP_NS - 20_000_000
t1 = t0 + 40_000_000
print("sliced:", slice_timestamp(t0), "->", slice_timestamp(t1), "delta", rtt_delta(slice_timestamp(t1),
                                                                                  slice_timestamp(t0)), "q")

# A gap longer than the wrap aliases; the tracker flags such readings stale.
t2 = t0 + WRAP_NS + 40_000_000
print("gap of one wrap plus 40 ms reads as", rtt_delta(slice_timestamp(t2), slice_timestamp(t0)), "q")
