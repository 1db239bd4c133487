"""Capture file input and output.

Record framing is handled here so timestamps stay integer nanoseconds;
dpkt decodes and builds the Ethernet/IP/UDP layers.
"""

import ipaddress
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import dpkt

from .flowid import UDP, FiveTuple
from .wire import build_short_header

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
LINKTYPE_LINUX_SLL = 113
LINKTYPE_IPV4 = 228
LINKTYPE_IPV6 = 229
_RAW_LINKTYPES = (LINKTYPE_RAW, 12, 14, LINKTYPE_IPV4, LINKTYPE_IPV6)


class PcapError(Exception):
    pass


@dataclass(frozen=True)
class RawPacket:
    capture_ts: int  # ns
    five_tuple: FiveTuple
    payload: bytes


@dataclass(frozen=True)
class Frame:
    t_ns: int
    data: bytes


def write_pcap(fh, frames: Iterable[Frame], linktype: int = LINKTYPE_ETHERNET, snaplen: int = 65535):
    fh.write(struct.pack("<IHHiIII", MAGIC_NSEC, 2, 4, 0, 0, snaplen, linktype))
    for f in frames:
        sec, nsec = divmod(f.t_ns, 1_000_000_000)
        data = f.data[:snaplen]
        fh.write(struct.pack("<IIII", sec, nsec, len(data), len(f.data)))
        fh.write(data)


def read_pcap(fh) -> tuple:
    """Return ``(linktype, iterator of Frame)`` for a classic pcap stream."""
    header = fh.read(24)
    if len(header) < 24:
        raise PcapError("file too short for a pcap header")
    for endian in "<>":
        magic = struct.unpack(endian + "I", header[:4])[0]
        if magic in (MAGIC_USEC, MAGIC_NSEC):
            break
    else:
        raise PcapError("not a pcap file (pcapng is not supported)")
    scale = 1 if magic == MAGIC_NSEC else 1000
    linktype = struct.unpack(endian + "I", header[20:24])[0] & 0x0FFFFFFF

    def frames():
        while True:
            rec = fh.read(16)
            if not rec:
                return
            if len(rec) < 16:
                raise PcapError("truncated record header")
            sec, frac, caplen, _ = struct.unpack(endian + "IIII", rec)
            data = fh.read(caplen)
            if len(data) < caplen:
                raise PcapError("truncated record data")
            yield Frame(sec * 1_000_000_000 + frac * scale, data)

    return linktype, frames()


def _ip_layer(linktype: int, data: bytes):
    if linktype == LINKTYPE_ETHERNET:
        return dpkt.ethernet.Ethernet(data).data
    if linktype == LINKTYPE_LINUX_SLL:
        return dpkt.sll.SLL(data).data
    if linktype in _RAW_LINKTYPES:
        if not data:
            return None
        version = data[0] >> 4
        if version == 4:
            return dpkt.ip.IP(data)
        if version == 6:
            return dpkt.ip6.IP6(data)
        return None
    raise PcapError(f"unsupported link type {linktype}")


def decode_udp(linktype: int, frame: Frame) -> Optional[RawPacket]:
    """UDP datagram inside ``frame``, or None for anything else."""
    try:
        ip = _ip_layer(linktype, frame.data)
    except (dpkt.UnpackError, struct.error):
        return None
    if isinstance(ip, dpkt.ip.IP):
        src, dst = ipaddress.IPv4Address(ip.src), ipaddress.IPv4Address(ip.dst)
    elif isinstance(ip, dpkt.ip6.IP6):
        src, dst = ipaddress.IPv6Address(ip.src), ipaddress.IPv6Address(ip.dst)
    else:
        return None
    udp = ip.data
    if not isinstance(udp, dpkt.udp.UDP):
        return None
    tuple_ = FiveTuple(str(src), udp.sport, str(dst), udp.dport, UDP)
    return RawPacket(frame.t_ns, tuple_, bytes(udp.data))


def iter_pcap(path) -> Iterator:
    """Yield a RawPacket for each UDP frame and None for every other frame."""
    with open(path, "rb") as fh:
        linktype, frames = read_pcap(fh)
        for frame in frames:
            yield decode_udp(linktype, frame)


def udp_frame(tuple_: FiveTuple, payload: bytes) -> bytes:
    """Ethernet frame carrying one UDP datagram."""
    src = ipaddress.ip_address(tuple_.src_ip)
    dst = ipaddress.ip_address(tuple_.dst_ip)
    udp = dpkt.udp.UDP(sport=tuple_.src_port, dport=tuple_.dst_port, data=payload)
    udp.ulen = len(udp)
    if src.version == 4:
        ip = dpkt.ip.IP(src=src.packed, dst=dst.packed, p=dpkt.ip.IP_PROTO_UDP, ttl=64, data=udp)
        ip.len = len(ip)
        eth_type = dpkt.ethernet.ETH_TYPE_IP
    else:
        ip = dpkt.ip6.IP6(src=src.packed, dst=dst.packed, nxt=dpkt.ip.IP_PROTO_UDP, hlim=64, data=udp)
        ip.plen = len(udp)
        eth_type = dpkt.ethernet.ETH_TYPE_IP6
    eth = dpkt.ethernet.Ethernet(src=b"\x02\x00\x00\x00\x00\x01", dst=b"\x02\x00\x00\x00\x00\x02",
                                 type=eth_type, data=ip)
    return bytes(eth)


def emit_pcap(events, path):
    """Write simulator events as Ethernet/UDP frames with nanosecond timestamps."""
    def frames():
        for ev in events:
            payload = ev.payload if ev.payload is not None else build_short_header(bool(ev.spin))
            yield Frame(ev.t_ns, udp_frame(ev.five_tuple, payload))

    with open(path, "wb") as fh:
        write_pcap(fh, frames())
