"""
Flow identity by connection ID
==============================

Short headers do not carry the length of the destination connection ID.
The tracker learns it from the peer's long headers and can then key flows
by CID, so a client that changes its address keeps its flow.
"""

from spintrack.flowid import FiveTuple
from spintrack.pipeline import Pipeline
from spintrack.wire import build_long_header, build_short_header

client = FiveTuple("192.0.2.10", 51000, "198.51.100.1", 443)
server_cid = bytes.fromhex("c0ffee0011223344")

p = Pipeline(use_cid=True)

# The server's handshake packet names its CID as source CID; that sets the
# length for the opposite direction.
p.feed(0, client.reverse(), build_long_header(1, b"\x01" * 4, server_cid))
print("learned DCID length for client->server:", p.cid_map.get(client))

# Client traffic: the spin value flips every 40 ms.
for k in range(20):
    p.feed(k * 10_000_000, client, build_short_header(bool((k // 4) & 1), server_cid))

# After NAT rebinding the client appears from a new port.
moved = FiveTuple("192.0.2.10", 62000, "198.51.100.1", 443)
p.cid_map.set(moved, len(server_cid))
reports = []
for k in range(20, 40):
    reports += p.feed(k * 10_000_000, moved, build_short_header(bool((k // 4) & 1), server_cid))

print("flows in table:", len(p.table.slots))
for r in reports:
    print(r.flow, r.rtt_quanta, "q")
