"""Application-payload codecs: DNS, DHCP, SSDP, ICMP messages.

Generators build these payloads and detectors parse them back, but both
sides go through the wire bytes, never through shared objects: a detector
only ever learns what a real middlebox could see.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .packets import IpProtocol, PacketRecord
from .pcapio import _checksum, encode_frame, ip_to_bytes, ip_to_str, mac_to_bytes, mac_to_str

DNS_PORT = 53
MDNS_PORT = 5353
SSDP_PORT = 1900
DHCP_SERVER_PORT = 67
DHCP_CLIENT_PORT = 68

QTYPE_A = 1
QTYPE_PTR = 12


def _encode_name(name: str) -> bytes:
    out = b""
    for label in name.strip(".").split("."):
        raw = label.encode("ascii")
        if not 0 < len(raw) < 64:
            raise ValueError(f"bad dns label {label!r}")
        out += bytes([len(raw)]) + raw
    return out + b"\x00"


def _decode_name(data: bytes, off: int) -> tuple[str, int]:
    labels = []
    jumps = 0
    end = None
    while True:
        if off >= len(data):
            raise ValueError("name runs off message")
        length = data[off]
        if length & 0xC0 == 0xC0:
            if off + 1 >= len(data):
                raise ValueError("bad compression pointer")
            ptr = ((length & 0x3F) << 8) | data[off + 1]
            if end is None:
                end = off + 2
            off = ptr
            jumps += 1
            if jumps > 16:
                raise ValueError("compression loop")
            continue
        off += 1
        if length == 0:
            break
        labels.append(data[off : off + length].decode("ascii"))
        off += length
    return ".".join(labels), (end if end is not None else off)


def encode_dns_query(txid: int, qname: str, qtype: int = QTYPE_A) -> bytes:
    hdr = struct.pack("!HHHHHH", txid, 0x0100, 1, 0, 0, 0)
    return hdr + _encode_name(qname) + struct.pack("!HH", qtype, 1)


def encode_dns_response(
    txid: int,
    qname: str,
    ips: Sequence[str] = (),
    rcode: int = 0,
    ptr_targets: Sequence[str] = (),
    ttl: int = 300,
) -> bytes:
    ancount = len(ips) + len(ptr_targets)
    hdr = struct.pack("!HHHHHH", txid, 0x8180 | rcode, 1, ancount, 0, 0)
    qtype = QTYPE_PTR if ptr_targets else QTYPE_A
    out = hdr + _encode_name(qname) + struct.pack("!HH", qtype, 1)
    for ip in ips:
        out += _encode_name(qname) + struct.pack("!HHIH", QTYPE_A, 1, ttl, 4) + ip_to_bytes(ip)
    for target in ptr_targets:
        rdata = _encode_name(target)
        out += _encode_name(qname) + struct.pack("!HHIH", QTYPE_PTR, 1, ttl, len(rdata)) + rdata
    return out


@dataclass
class DnsMessage:
    txid: int
    is_response: bool
    rcode: int
    qname: Optional[str]
    a_records: list[tuple[str, str]] = field(default_factory=list)  # (name, ip)
    ptr_records: list[tuple[str, str]] = field(default_factory=list)  # (name, target)


def parse_dns(payload: bytes) -> Optional[DnsMessage]:
    """Best-effort DNS parse; returns None if the message is unparseable."""
    try:
        if len(payload) < 12:
            return None
        txid, flags, qd, an, _ns, _ar = struct.unpack("!HHHHHH", payload[:12])
        off = 12
        qname = None
        for _ in range(qd):
            qname, off = _decode_name(payload, off)
            off += 4
        msg = DnsMessage(txid=txid, is_response=bool(flags & 0x8000), rcode=flags & 0x000F, qname=qname)
        for _ in range(an):
            name, off = _decode_name(payload, off)
            rtype, _rclass, _ttl, rdlen = struct.unpack("!HHIH", payload[off : off + 10])
            off += 10
            rdata = payload[off : off + rdlen]
            off += rdlen
            if rtype == QTYPE_A and rdlen == 4:
                msg.a_records.append((name, ip_to_str(rdata)))
            elif rtype == QTYPE_PTR:
                target, _ = _decode_name(payload, off - rdlen)
                msg.ptr_records.append((name, target))
        return msg
    except (ValueError, struct.error, UnicodeDecodeError):
        return None


# ---------------------------------------------------------------- DHCP

DHCP_DISCOVER = 1
DHCP_OFFER = 2
DHCP_REQUEST = 3
DHCP_ACK = 5
_DHCP_COOKIE = b"\x63\x82\x53\x63"


@dataclass
class DhcpMessage:
    msg_type: int
    xid: int
    client_mac: str
    your_ip: str = "0.0.0.0"
    hostname: Optional[str] = None
    param_req_list: tuple[int, ...] = ()
    requested_ip: Optional[str] = None
    server_id: Optional[str] = None
    dns_server: Optional[str] = None


def encode_dhcp(msg: DhcpMessage) -> bytes:
    op = 1 if msg.msg_type in (DHCP_DISCOVER, DHCP_REQUEST) else 2
    fixed = struct.pack(
        "!BBBBIHH4s4s4s4s",
        op,
        1,  # htype ethernet
        6,  # hlen
        0,
        msg.xid,
        0,
        0x8000,  # broadcast flag
        ip_to_bytes("0.0.0.0"),
        ip_to_bytes(msg.your_ip),
        ip_to_bytes(msg.server_id or "0.0.0.0"),
        ip_to_bytes("0.0.0.0"),
    )
    fixed += mac_to_bytes(msg.client_mac) + b"\x00" * 10  # chaddr padded to 16
    fixed += b"\x00" * 64 + b"\x00" * 128  # sname, file
    opts = bytes([53, 1, msg.msg_type])
    if msg.hostname:
        raw = msg.hostname.encode("ascii")
        opts += bytes([12, len(raw)]) + raw
    if msg.param_req_list:
        opts += bytes([55, len(msg.param_req_list)]) + bytes(msg.param_req_list)
    if msg.requested_ip:
        opts += bytes([50, 4]) + ip_to_bytes(msg.requested_ip)
    if msg.server_id:
        opts += bytes([54, 4]) + ip_to_bytes(msg.server_id)
    if msg.dns_server:
        opts += bytes([6, 4]) + ip_to_bytes(msg.dns_server)
    opts += bytes([255])
    return fixed + _DHCP_COOKIE + opts


def parse_dhcp(payload: bytes) -> Optional[DhcpMessage]:
    try:
        if len(payload) < 240 or payload[236:240] != _DHCP_COOKIE:
            return None
        xid = struct.unpack("!I", payload[4:8])[0]
        your_ip = ip_to_str(payload[16:20])
        server_ip = ip_to_str(payload[20:24])
        mac = mac_to_str(payload[28:34])
        msg = DhcpMessage(msg_type=0, xid=xid, client_mac=mac, your_ip=your_ip)
        if server_ip != "0.0.0.0":
            msg.server_id = server_ip
        off = 240
        while off < len(payload):
            code = payload[off]
            if code == 255:
                break
            if code == 0:
                off += 1
                continue
            ln = payload[off + 1]
            val = payload[off + 2 : off + 2 + ln]
            off += 2 + ln
            if code == 53 and ln == 1:
                msg.msg_type = val[0]
            elif code == 12:
                msg.hostname = val.decode("ascii", "replace")
            elif code == 55:
                msg.param_req_list = tuple(val)
            elif code == 50 and ln == 4:
                msg.requested_ip = ip_to_str(val)
            elif code == 54 and ln == 4:
                msg.server_id = ip_to_str(val)
            elif code == 6 and ln >= 4:
                msg.dns_server = ip_to_str(val[:4])
        if msg.msg_type == 0:
            return None
        return msg
    except (struct.error, IndexError):
        return None


# ---------------------------------------------------------------- SSDP / UPnP

def encode_ssdp_notify(device_type: str, location_ip: str) -> bytes:
    text = (
        "NOTIFY * HTTP/1.1\r\n"
        "HOST: 239.255.255.250:1900\r\n"
        f"NT: {device_type}\r\n"
        "NTS: ssdp:alive\r\n"
        f"LOCATION: http://{location_ip}:8008/desc.xml\r\n"
        "\r\n"
    )
    return text.encode("ascii")


def parse_ssdp_nt(payload: bytes) -> Optional[str]:
    try:
        for line in payload.decode("ascii", "replace").split("\r\n"):
            if line.upper().startswith("NT:"):
                return line[3:].strip()
    except Exception:
        pass
    return None


# ---------------------------------------------------------------- ICMP messages

ICMP_ECHO_REPLY = 0
ICMP_UNREACHABLE = 3
ICMP_ECHO_REQUEST = 8
ICMP_CODE_PORT_UNREACHABLE = 3


def _icmp_message(icmp_type: int, code: int, rest: bytes) -> bytes:
    hdr = struct.pack("!BBH", icmp_type, code, 0) + rest
    ck = _checksum(hdr)
    return struct.pack("!BBH", icmp_type, code, ck) + rest


def icmp_echo(ident: int, seq: int, data: bytes = b"", reply: bool = False) -> bytes:
    return _icmp_message(
        ICMP_ECHO_REPLY if reply else ICMP_ECHO_REQUEST, 0, struct.pack("!HH", ident, seq) + data
    )


def icmp_port_unreachable(original: PacketRecord) -> bytes:
    """Type 3 code 3 quoting the original datagram's IP header + 8 bytes."""
    frame = encode_frame(original)
    quoted = frame[14 : 14 + 20 + 8]
    return _icmp_message(ICMP_UNREACHABLE, ICMP_CODE_PORT_UNREACHABLE, b"\x00" * 4 + quoted)


def icmp_type(payload: bytes) -> Optional[int]:
    return payload[0] if payload else None


def icmp_code(payload: bytes) -> Optional[int]:
    return payload[1] if len(payload) > 1 else None


@dataclass
class QuotedDatagram:
    src_ip: str
    dst_ip: str
    protocol: int
    src_port: Optional[int]
    dst_port: Optional[int]


def icmp_quoted_datagram(payload: bytes) -> Optional[QuotedDatagram]:
    """Recover the original datagram summary from an ICMP error message."""
    try:
        quoted = payload[8:]
        if len(quoted) < 20:
            return None
        proto = quoted[9]
        src_ip = ip_to_str(quoted[12:16])
        dst_ip = ip_to_str(quoted[16:20])
        ihl = (quoted[0] & 0x0F) * 4
        sport = dport = None
        if proto in (6, 17) and len(quoted) >= ihl + 4:
            sport, dport = struct.unpack("!HH", quoted[ihl : ihl + 4])
        return QuotedDatagram(src_ip, dst_ip, proto, sport, dport)
    except (struct.error, IndexError):
        return None


# ---------------------------------------------------------------- misc

def shannon_entropy(data: bytes) -> float:
    """Shannon entropy in bits per byte; 0.0 for empty payloads."""
    if not data:
        return 0.0
    counts = Counter(data)
    n = len(data)
    return -sum((c / n) * math.log2(c / n) for c in counts.values())


def is_icmp_echo_request(p: PacketRecord) -> bool:
    return p.ip_protocol is IpProtocol.ICMP and icmp_type(p.payload) == ICMP_ECHO_REQUEST


def is_icmp_port_unreachable(p: PacketRecord) -> bool:
    return (
        p.ip_protocol is IpProtocol.ICMP
        and icmp_type(p.payload) == ICMP_UNREACHABLE
        and icmp_code(p.payload) == ICMP_CODE_PORT_UNREACHABLE
    )
