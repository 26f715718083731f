"""Packet and trace data model.

Everything downstream (harness, generators, detectors, metrics) works on
immutable PacketRecord values. Records are normalized on construction:
timestamps snap to the microsecond grid so equality survives a pcap
round-trip, and field combinations that cannot exist on the wire are
rejected early.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Sequence


class CapturePoint(enum.Enum):
    GATEWAY = "GATEWAY"
    IOT_BRIDGE = "IOT_BRIDGE"


class IpProtocol(enum.Enum):
    TCP = 6
    UDP = 17
    ICMP = 1
    OTHER = -1


@dataclass(frozen=True)
class TcpFlags:
    syn: bool = False
    ack: bool = False
    fin: bool = False
    rst: bool = False

    def to_byte(self) -> int:
        return (
            (0x02 if self.syn else 0)
            | (0x10 if self.ack else 0)
            | (0x01 if self.fin else 0)
            | (0x04 if self.rst else 0)
        )

    @classmethod
    def from_byte(cls, b: int) -> "TcpFlags":
        return cls(
            syn=bool(b & 0x02),
            ack=bool(b & 0x10),
            fin=bool(b & 0x01),
            rst=bool(b & 0x04),
        )


def quantize_time(t: float) -> float:
    """Snap a timestamp to the microsecond grid.

    The canonical value is total_microseconds / 1e6 computed in one
    division, which is exactly what pcap read-back produces.
    """
    return round(t * 1_000_000) / 1e6


ETH_HEADER_LEN = 14
IP_HEADER_LEN = 20
TCP_HEADER_LEN = 20
UDP_HEADER_LEN = 8


def _l4_header_len(proto: IpProtocol, frag_offset: int) -> int:
    if frag_offset > 0:
        return 0
    if proto is IpProtocol.TCP:
        return TCP_HEADER_LEN
    if proto is IpProtocol.UDP:
        return UDP_HEADER_LEN
    return 0  # ICMP message lives in payload; OTHER carries raw payload


@dataclass(frozen=True)
class PacketRecord:
    """One captured (or to-be-injected) Ethernet/IPv4 frame.

    For TCP/UDP, ``payload`` is the L4 payload. For ICMP, ``payload`` is
    the complete ICMP message (type, code, checksum, rest), so echo ids
    and embedded datagrams survive a byte-exact round-trip. Ports exist
    only on first fragments of TCP/UDP; non-first fragments carry the raw
    continuation bytes in ``payload``.
    """

    timestamp: float
    src_mac: str
    dst_mac: str
    src_ip: str
    dst_ip: str
    ip_protocol: IpProtocol
    src_port: Optional[int] = None
    dst_port: Optional[int] = None
    tcp_flags: Optional[TcpFlags] = None
    frag_offset: int = 0
    more_fragments: bool = False
    payload: bytes = b""
    wire_len: int = 0
    ethertype: int = 0x0800
    other_protocol: int = 0
    capture_point: Optional[CapturePoint] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "timestamp", quantize_time(self.timestamp))
        ports_allowed = (
            self.ip_protocol in (IpProtocol.TCP, IpProtocol.UDP)
            and self.frag_offset == 0
        )
        if (self.src_port is not None or self.dst_port is not None) and not ports_allowed:
            raise ValueError("ports only valid on first fragments of TCP/UDP")
        if ports_allowed and (self.src_port is None or self.dst_port is None):
            raise ValueError("TCP/UDP packets need both ports")
        if self.tcp_flags is not None and (
            self.ip_protocol is not IpProtocol.TCP or self.frag_offset > 0
        ):
            raise ValueError("tcp_flags only valid on first-fragment TCP")
        if self.ip_protocol is IpProtocol.TCP and self.frag_offset == 0 and self.tcp_flags is None:
            object.__setattr__(self, "tcp_flags", TcpFlags())
        if self.frag_offset < 0 or self.frag_offset > 0x1FFF:
            raise ValueError("fragment offset out of range")
        min_len = (
            ETH_HEADER_LEN
            + IP_HEADER_LEN
            + _l4_header_len(self.ip_protocol, self.frag_offset)
            + len(self.payload)
        )
        if self.wire_len == 0:
            object.__setattr__(self, "wire_len", max(60, min_len))
        elif self.wire_len < min_len:
            raise ValueError(f"wire_len {self.wire_len} < frame length {min_len}")

    @property
    def header_len(self) -> int:
        return ETH_HEADER_LEN + IP_HEADER_LEN + _l4_header_len(self.ip_protocol, self.frag_offset)

    def is_tcp(self) -> bool:
        return self.ip_protocol is IpProtocol.TCP

    def is_udp(self) -> bool:
        return self.ip_protocol is IpProtocol.UDP

    def flow_key(self) -> tuple:
        return (self.src_ip, self.src_port, self.dst_ip, self.dst_port, self.ip_protocol)

    def at_point(self, point: CapturePoint) -> "PacketRecord":
        return replace(self, capture_point=point)


@dataclass(frozen=True)
class TraceMetadata:
    capture_point: Optional[CapturePoint] = None
    start_time: Optional[float] = None
    end_time: Optional[float] = None
    link_id: str = ""
    skipped_frames: int = 0


class Trace:
    """Time-ordered sequence of PacketRecord plus capture metadata."""

    def __init__(
        self,
        packets: Iterable[PacketRecord] = (),
        metadata: TraceMetadata = TraceMetadata(),
    ) -> None:
        self._packets: tuple[PacketRecord, ...] = tuple(packets)
        self.metadata = metadata
        last = None
        for p in self._packets:
            if last is not None and p.timestamp < last:
                raise ValueError("trace timestamps must be non-decreasing")
            last = p.timestamp

    @property
    def packets(self) -> tuple[PacketRecord, ...]:
        return self._packets

    def __len__(self) -> int:
        return len(self._packets)

    def __iter__(self) -> Iterator[PacketRecord]:
        return iter(self._packets)

    def __getitem__(self, i):
        return self._packets[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, Trace) and self._packets == other._packets

    def __repr__(self) -> str:
        return f"Trace({len(self._packets)} packets)"

    def total_bytes(self) -> int:
        return sum(p.wire_len for p in self._packets)

    def window(self, t0: float, t1: float) -> "Trace":
        """Packets with t0 <= timestamp < t1 (half-open)."""
        return Trace(
            (p for p in self._packets if t0 <= p.timestamp < t1),
            metadata=self.metadata,
        )


class Party(enum.Enum):
    FIRST = "FIRST"
    SUPPORT = "SUPPORT"
    THIRD = "THIRD"
    UNCLASSIFIED = "UNCLASSIFIED"


@dataclass
class DestinationRecord:
    """Aggregate of outbound traffic toward one destination key.

    The key is the resolved hostname when DNS correlation found one,
    otherwise the dotted-quad IP.
    """

    key: str
    bytes_total: int
    first_seen: float
    last_seen: float
    party: Party = Party.UNCLASSIFIED

    def __post_init__(self) -> None:
        if self.bytes_total <= 0:
            raise ValueError("bytes_total must be positive")
        if self.first_seen > self.last_seen:
            raise ValueError("first_seen must not exceed last_seen")


def destinations_to_csv(records: Sequence[DestinationRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "party", "bytes_total", "first_seen", "last_seen"])
        for r in records:
            w.writerow([r.key, r.party.value, r.bytes_total, f"{r.first_seen:.6f}", f"{r.last_seen:.6f}"])
