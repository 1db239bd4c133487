"""Flow identification: five-tuples, connection-ID lengths and selection lists."""

import enum
import ipaddress
import struct
import threading
import zlib
from dataclasses import dataclass
from typing import Optional, Union

from .wire import MAX_CID_LEN, ConnectionId, LongHeaderInfo

UDP = 17


@dataclass(frozen=True)
class FiveTuple:
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    protocol: int = UDP

    def __post_init__(self):
        for name in ("src_ip", "dst_ip"):
            object.__setattr__(self, name, str(ipaddress.ip_address(getattr(self, name))))
        for name in ("src_port", "dst_port"):
            port = int(getattr(self, name))
            if not 0 <= port <= 0xFFFF:
                raise ValueError(f"{name} {port} out of range")
            object.__setattr__(self, name, port)
        if not 0 <= self.protocol <= 0xFF:
            raise ValueError(f"protocol {self.protocol} out of range")

    def reverse(self) -> "FiveTuple":
        return FiveTuple(self.dst_ip, self.dst_port, self.src_ip, self.src_port, self.protocol)

    def canonical(self) -> bytes:
        src = ipaddress.ip_address(self.src_ip).packed
        dst = ipaddress.ip_address(self.dst_ip).packed
        return src + dst + struct.pack("!HHB", self.src_port, self.dst_port, self.protocol)

    def __str__(self):
        return f"{self.src_ip},{self.src_port},{self.dst_ip},{self.dst_port},{self.protocol}"

    @classmethod
    def parse(cls, text: str) -> "FiveTuple":
        src_ip, src_port, dst_ip, dst_port, proto = [f.strip() for f in text.split(",")]
        return cls(src_ip, int(src_port), dst_ip, int(dst_port), int(proto))


class KeyKind(enum.Enum):
    FIVE_TUPLE = "tuple"
    CID = "cid"


@dataclass(frozen=True)
class FlowId:
    value: int
    key_kind: KeyKind = KeyKind.FIVE_TUPLE

    def __str__(self):
        return f"{self.key_kind.value}:{self.value:08x}"

    @classmethod
    def parse(cls, text: str) -> "FlowId":
        kind, _, value = text.partition(":")
        return cls(int(value, 16), KeyKind(kind))


def flow_id(tuple_: FiveTuple, cid: Optional[ConnectionId] = None) -> FlowId:
    """CRC-32 of the CID, or of the canonical five-tuple for zero-length CIDs."""
    if cid is not None and cid.length > 0:
        return FlowId(zlib.crc32(cid.data), KeyKind.CID)
    return FlowId(zlib.crc32(tuple_.canonical()), KeyKind.FIVE_TUPLE)


class CidLenMap:
    """Maps the five-tuple of short header packets to their DCID length.

    With ``key="endpoint"`` only the receiving endpoint's address and port
    form the key, which survives rebinding of the other side.
    """

    def __init__(self, key: str = "tuple"):
        if key not in ("tuple", "endpoint"):
            raise ValueError(f"unknown key mode {key!r}")
        self.key = key
        self._entries = {}
        self._lock = threading.Lock()

    def _key(self, tuple_: FiveTuple):
        if self.key == "endpoint":
            return (tuple_.dst_ip, tuple_.dst_port)
        return tuple_

    def set(self, tuple_: FiveTuple, dcid_len: int):
        if not 0 <= dcid_len <= MAX_CID_LEN:
            raise ValueError(f"dcid length {dcid_len} out of range")
        with self._lock:
            self._entries[self._key(tuple_)] = dcid_len

    def get(self, tuple_: FiveTuple) -> Optional[int]:
        with self._lock:
            return self._entries.get(self._key(tuple_))

    def __len__(self):
        return len(self._entries)

    @classmethod
    def load(cls, path, key: str = "tuple") -> "CidLenMap":
        """Read ``src_ip,src_port,dst_ip,dst_port,proto,dcid_len`` lines."""
        cmap = cls(key)
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                fields = [f.strip() for f in line.split(",")]
                if len(fields) != 6:
                    raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(fields)}")
                cmap.set(FiveTuple.parse(",".join(fields[:5])), int(fields[5]))
        return cmap


def learn_cid_length(cmap: CidLenMap, tuple_: FiveTuple, hdr: LongHeaderInfo) -> CidLenMap:
    # the sender's SCID is what the peer puts in the DCID of its short headers
    cmap.set(tuple_.reverse(), hdr.scid.length)
    return cmap


def lookup_cid_length(cmap: CidLenMap, tuple_: FiveTuple) -> Optional[int]:
    return cmap.get(tuple_)


class SelectionList:
    def __init__(self, selected=None):
        # None means wildcard
        self._selected = None if selected is None else {self._value(s) for s in selected}

    @staticmethod
    def _value(item: Union[FlowId, int]) -> int:
        return item.value if isinstance(item, FlowId) else int(item)

    @property
    def wildcard(self) -> bool:
        return self._selected is None

    def __contains__(self, item):
        return self._selected is None or self._value(item) in self._selected

    @classmethod
    def load(cls, path) -> "SelectionList":
        """One flow ID (hex) or five-tuple per line; ``*`` selects everything."""
        ids = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if line == "*":
                    return cls(None)
                if "," in line:
                    ids.append(flow_id(FiveTuple.parse(line)))
                elif ":" in line:
                    ids.append(FlowId.parse(line))
                else:
                    try:
                        ids.append(int(line, 16))
                    except ValueError:
                        raise ValueError(f"{path}:{lineno}: not a flow id or five-tuple: {line!r}") from None
        return cls(ids)


ALL_FLOWS = SelectionList(None)


def admit(selection: SelectionList, fid: FlowId) -> bool:
    return fid in selection
