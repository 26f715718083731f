"""pcap file I/O and the Ethernet/IPv4 frame codec.

Classic pcap only: magic 0xa1b2c3d4, version 2.4, microsecond timestamps,
linktype 1 (Ethernet). Frames are encoded with canonical header values
(TTL 64, IP id 0, TCP seq/ack 0, window 8192) so that decode(encode(p))
reproduces the record exactly and re-writing a file we produced is
byte-identical.
"""

from __future__ import annotations

import struct

from .packets import (
    ETH_HEADER_LEN,
    IP_HEADER_LEN,
    CapturePoint,
    IpProtocol,
    PacketRecord,
    TcpFlags,
    Trace,
    TraceMetadata,
)

PCAP_MAGIC = 0xA1B2C3D4
PCAP_VERSION = (2, 4)
LINKTYPE_ETHERNET = 1
GLOBAL_HEADER = struct.Struct("<IHHiIII")
RECORD_HEADER = struct.Struct("<IIII")


class MalformedFileError(ValueError):
    """Truncated file, bad magic, or a frame the codec cannot parse."""


class UnsupportedLinktypeError(ValueError):
    """pcap linktype other than Ethernet."""


def mac_to_bytes(mac: str) -> bytes:
    parts = mac.split(":")
    if len(parts) != 6:
        raise ValueError(f"bad mac {mac!r}")
    return bytes(int(p, 16) for p in parts)


def mac_to_str(b: bytes) -> str:
    return ":".join(f"{x:02x}" for x in b)


def ip_to_bytes(ip: str) -> bytes:
    parts = ip.split(".")
    if len(parts) != 4:
        raise ValueError(f"bad ipv4 {ip!r}")
    return bytes(int(p) for p in parts)


def ip_to_str(b: bytes) -> str:
    return ".".join(str(x) for x in b)


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def encode_frame(p: PacketRecord) -> bytes:
    """Serialize a PacketRecord to Ethernet frame bytes, zero-padded to wire_len."""
    eth = mac_to_bytes(p.dst_mac) + mac_to_bytes(p.src_mac) + struct.pack("!H", p.ethertype)

    if p.frag_offset > 0:
        l4 = b""
        ip_payload = p.payload
    elif p.ip_protocol is IpProtocol.TCP:
        flags = p.tcp_flags or TcpFlags()
        l4 = struct.pack(
            "!HHIIBBHHH",
            p.src_port,
            p.dst_port,
            0,  # seq
            0,  # ack
            5 << 4,
            flags.to_byte(),
            8192,
            0,  # checksum placeholder
            0,
        )
        ip_payload = p.payload
    elif p.ip_protocol is IpProtocol.UDP:
        l4 = struct.pack("!HHHH", p.src_port, p.dst_port, 8 + len(p.payload), 0)
        ip_payload = p.payload
    else:
        # ICMP carries its whole message in payload; OTHER is raw bytes
        l4 = b""
        ip_payload = p.payload

    total_len = IP_HEADER_LEN + len(l4) + len(ip_payload)
    proto_num = p.ip_protocol.value if p.ip_protocol is not IpProtocol.OTHER else p.other_protocol
    flags_frag = (0x2000 if p.more_fragments else 0) | (p.frag_offset & 0x1FFF)
    ip_hdr = struct.pack(
        "!BBHHHBBH4s4s",
        0x45,
        0,
        total_len,
        0,  # identification
        flags_frag,
        64,  # ttl
        proto_num,
        0,  # checksum placeholder
        ip_to_bytes(p.src_ip),
        ip_to_bytes(p.dst_ip),
    )
    ip_hdr = ip_hdr[:10] + struct.pack("!H", _checksum(ip_hdr)) + ip_hdr[12:]

    if p.ip_protocol is IpProtocol.TCP and p.frag_offset == 0:
        pseudo = ip_to_bytes(p.src_ip) + ip_to_bytes(p.dst_ip) + struct.pack(
            "!BBH", 0, 6, len(l4) + len(ip_payload)
        )
        ck = _checksum(pseudo + l4 + ip_payload)
        l4 = l4[:16] + struct.pack("!H", ck) + l4[18:]
    elif p.ip_protocol is IpProtocol.UDP and p.frag_offset == 0:
        pseudo = ip_to_bytes(p.src_ip) + ip_to_bytes(p.dst_ip) + struct.pack(
            "!BBH", 0, 17, len(l4) + len(ip_payload)
        )
        ck = _checksum(pseudo + l4 + ip_payload)
        l4 = l4[:6] + struct.pack("!H", ck)

    frame = eth + ip_hdr + l4 + ip_payload
    if p.wire_len < len(frame):
        raise ValueError(f"wire_len {p.wire_len} smaller than encoded frame {len(frame)}")
    return frame + b"\x00" * (p.wire_len - len(frame))


def decode_frame(data: bytes, timestamp: float, wire_len: int) -> PacketRecord:
    """Parse Ethernet frame bytes into a PacketRecord.

    Returns None for non-IPv4 ethertypes (counted by the caller).
    """
    if len(data) < ETH_HEADER_LEN + IP_HEADER_LEN:
        raise MalformedFileError("frame shorter than Ethernet+IPv4 headers")
    dst_mac = mac_to_str(data[0:6])
    src_mac = mac_to_str(data[6:12])
    (ethertype,) = struct.unpack("!H", data[12:14])
    if ethertype != 0x0800:
        return None

    ip = data[14:]
    vihl = ip[0]
    if vihl >> 4 != 4:
        raise MalformedFileError("not an IPv4 packet")
    ihl = (vihl & 0x0F) * 4
    if ihl < 20 or len(ip) < ihl:
        raise MalformedFileError("bad IPv4 header length")
    total_len, _ident, flags_frag, _ttl, proto_num = struct.unpack("!HHHBB", ip[2:10])
    src_ip = ip_to_str(ip[12:16])
    dst_ip = ip_to_str(ip[16:20])
    frag_offset = flags_frag & 0x1FFF
    more_fragments = bool(flags_frag & 0x2000)
    body = ip[ihl : max(ihl, min(total_len, len(ip)))]

    proto = {6: IpProtocol.TCP, 17: IpProtocol.UDP, 1: IpProtocol.ICMP}.get(proto_num, IpProtocol.OTHER)
    src_port = dst_port = None
    tcp_flags = None
    if frag_offset == 0 and proto is IpProtocol.TCP:
        if len(body) < 20:
            raise MalformedFileError("truncated TCP header")
        src_port, dst_port = struct.unpack("!HH", body[0:4])
        data_off = (body[12] >> 4) * 4
        tcp_flags = TcpFlags.from_byte(body[13])
        payload = body[data_off:]
    elif frag_offset == 0 and proto is IpProtocol.UDP:
        if len(body) < 8:
            raise MalformedFileError("truncated UDP header")
        src_port, dst_port = struct.unpack("!HH", body[0:4])
        payload = body[8:]
    else:
        payload = body

    return PacketRecord(
        timestamp=timestamp,
        src_mac=src_mac,
        dst_mac=dst_mac,
        src_ip=src_ip,
        dst_ip=dst_ip,
        ip_protocol=proto,
        src_port=src_port,
        dst_port=dst_port,
        tcp_flags=tcp_flags,
        frag_offset=frag_offset,
        more_fragments=more_fragments,
        payload=payload,
        wire_len=wire_len,
        other_protocol=proto_num if proto is IpProtocol.OTHER else 0,
    )


def write_trace(trace: Trace, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(
            GLOBAL_HEADER.pack(PCAP_MAGIC, PCAP_VERSION[0], PCAP_VERSION[1], 0, 0, 65535, LINKTYPE_ETHERNET)
        )
        for p in trace:
            frame = encode_frame(p)
            us = round(p.timestamp * 1_000_000)
            sec, usec = divmod(us, 1_000_000)
            fh.write(RECORD_HEADER.pack(sec, usec, len(frame), p.wire_len))
            fh.write(frame)


def read_trace(path: str, capture_point: CapturePoint | None = None) -> Trace:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < GLOBAL_HEADER.size:
        raise MalformedFileError(f"{path}: shorter than a pcap global header")
    magic, _vmaj, _vmin, _tz, _sig, _snap, linktype = GLOBAL_HEADER.unpack_from(raw, 0)
    if magic != PCAP_MAGIC:
        raise MalformedFileError(f"{path}: bad magic 0x{magic:08x}")
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedLinktypeError(f"{path}: linktype {linktype} is not Ethernet")

    packets = []
    skipped = 0
    off = GLOBAL_HEADER.size
    while off < len(raw):
        if off + RECORD_HEADER.size > len(raw):
            raise MalformedFileError(f"{path}: truncated record header at offset {off}")
        sec, usec, incl_len, orig_len = RECORD_HEADER.unpack_from(raw, off)
        off += RECORD_HEADER.size
        if off + incl_len > len(raw):
            raise MalformedFileError(f"{path}: truncated packet data at offset {off}")
        ts = (sec * 1_000_000 + usec) / 1e6
        pkt = decode_frame(raw[off : off + incl_len], ts, orig_len)
        if pkt is None:
            skipped += 1
        else:
            packets.append(pkt)
        off += incl_len

    meta = TraceMetadata(
        capture_point=capture_point,
        start_time=packets[0].timestamp if packets else None,
        end_time=packets[-1].timestamp if packets else None,
        skipped_frames=skipped,
    )
    return Trace(packets, metadata=meta)
