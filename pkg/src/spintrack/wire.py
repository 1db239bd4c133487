"""Parsing of the QUIC invariant header fields used by the tracker.

Only the header form, version, connection IDs and the spin bit are read.
Everything after the connection IDs is treated as opaque.
"""

import enum
from dataclasses import dataclass

MAX_CID_LEN = 20

HEADER_FORM_BIT = 0x80
FIXED_BIT = 0x40
SPIN_BIT = 0x20


class WireError(ValueError):
    pass


class Truncated(WireError):
    pass


class OversizeCid(WireError):
    pass


class HeaderForm(enum.Enum):
    LONG = "long"
    SHORT = "short"
    NOT_QUIC = "not_quic"


@dataclass(frozen=True)
class ConnectionId:
    data: bytes = b""

    def __post_init__(self):
        if len(self.data) > MAX_CID_LEN:
            raise OversizeCid(f"connection id of {len(self.data)} bytes exceeds {MAX_CID_LEN}")

    @property
    def length(self) -> int:
        return len(self.data)

    def __bool__(self):
        return bool(self.data)

    def hex(self) -> str:
        return self.data.hex()


@dataclass(frozen=True)
class LongHeaderInfo:
    version: int
    dcid: ConnectionId
    scid: ConnectionId


@dataclass(frozen=True)
class ShortHeaderInfo:
    spin_bit: bool
    dcid: ConnectionId


def classify_header(payload: bytes) -> HeaderForm:
    # only the first byte is ever looked at
    if not payload:
        return HeaderForm.NOT_QUIC
    first = payload[0]
    if not first & FIXED_BIT:
        return HeaderForm.NOT_QUIC
    if first & HEADER_FORM_BIT:
        return HeaderForm.LONG
    return HeaderForm.SHORT


def parse_long_header(payload: bytes) -> LongHeaderInfo:
    """Read version, DCID and SCID from a long header packet.

    Raises :class:`Truncated` if a declared length runs past the end of the
    payload and :class:`OversizeCid` for a length byte above 20.
    """
    if len(payload) < 6:
        raise Truncated(f"long header needs at least 6 bytes, got {len(payload)}")
    version = int.from_bytes(payload[1:5], "big")
    pos = 5
    cids = []
    for _ in range(2):
        if pos >= len(payload):
            raise Truncated("missing connection id length byte")
        n = payload[pos]
        if n > MAX_CID_LEN:
            raise OversizeCid(f"connection id length {n} exceeds {MAX_CID_LEN}")
        pos += 1
        if pos + n > len(payload):
            raise Truncated(f"connection id of {n} bytes runs past payload end")
        cids.append(ConnectionId(bytes(payload[pos:pos + n])))
        pos += n
    return LongHeaderInfo(version, cids[0], cids[1])


def parse_short_header(payload: bytes, dcid_len: int = 0) -> ShortHeaderInfo:
    if dcid_len > MAX_CID_LEN:
        raise OversizeCid(f"connection id length {dcid_len} exceeds {MAX_CID_LEN}")
    if len(payload) < 1 + dcid_len:
        raise Truncated(f"short header with {dcid_len}-byte DCID needs {1 + dcid_len} bytes, got {len(payload)}")
    return ShortHeaderInfo(
        spin_bit=bool(payload[0] & SPIN_BIT),
        dcid=ConnectionId(bytes(payload[1:1 + dcid_len])),
    )


# Packet builders. Used by the simulator and by round-trip tests.

def build_short_header(spin: bool, dcid: bytes = b"", packet_number: int = 0, body_len: int = 16) -> bytes:
    first = FIXED_BIT | (SPIN_BIT if spin else 0)  # 1-byte packet number, key phase 0
    return bytes([first]) + bytes(dcid) + bytes([packet_number & 0xFF]) + bytes(body_len)


def build_long_header(version: int, dcid: bytes = b"", scid: bytes = b"", packet_type: int = 0, body_len: int = 16) -> bytes:
    if len(dcid) > MAX_CID_LEN or len(scid) > MAX_CID_LEN:
        raise OversizeCid("connection ids are limited to 20 bytes")
    first = HEADER_FORM_BIT | FIXED_BIT | ((packet_type & 0x3) << 4)
    return (
        bytes([first])
        + version.to_bytes(4, "big")
        + bytes([len(dcid)]) + bytes(dcid)
        + bytes([len(scid)]) + bytes(scid)
        + bytes(body_len)
    )
