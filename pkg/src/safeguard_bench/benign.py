"""Benign device behavior, the builtin device catalog, and traffic templates.

The same session builder feeds three consumers: the periodic background
chatter devices emit while connected (baseline learning, overprotection),
the builtin template traces replayed by the anomaly scenarios, and the
latency-free fixtures tests use.
"""

from __future__ import annotations

import random
import zlib
from typing import Optional

from .harness import (
    DeviceCategory,
    DeviceDescriptor,
    Harness,
    ROUTER_LAN_MAC,
    UPSTREAM_RESOLVER_IP,
)
from .packets import IpProtocol, PacketRecord, TcpFlags, Trace, TraceMetadata
from .payloads import encode_dns_query

TEMPLATE_MAC = "02:7e:3f:00:00:99"
TEMPLATE_IP = "192.168.7.250"

# Static endpoints for the builtin traffic profiles. Registered as harness
# responders by ensure_profile_hosts().
PROFILE_HOSTS = {
    "echo": [("echo-cloud.example", "198.51.100.200", {"tcp_open": {443}})],
    "google_home": [
        ("gh-api.example", "198.51.100.201", {"tcp_open": {5228}}),
        ("gh-quic.example", "198.51.100.202", {"udp_open": {443}}),
    ],
    "camera": [("cam-stream.example", "198.51.100.203", {"tcp_open": {443}})],
}


def ensure_profile_hosts(h: Harness) -> None:
    for hosts in PROFILE_HOSTS.values():
        for hostname, ip, opts in hosts:
            if hostname not in h.dns_zone:
                h.register_host(hostname, ip, **opts)


def _lan_pkt(ts, src_mac, src_ip, dst_ip, proto, sport, dport, payload=b"", flags=None):
    return PacketRecord(
        timestamp=ts, src_mac=src_mac, dst_mac=ROUTER_LAN_MAC,
        src_ip=src_ip, dst_ip=dst_ip, ip_protocol=proto,
        src_port=sport, dst_port=dport, payload=payload, tcp_flags=flags,
    )


def chatter_session(
    src_mac: str,
    src_ip: str,
    dst_ip: str,
    hostname: str,
    t0: float,
    rng: random.Random,
    sport: int,
    with_dns: bool,
    size_scale: float = 1.0,
) -> list[PacketRecord]:
    """One keepalive exchange with a cloud host: optional DNS, then TLS-like TCP."""
    out = []
    t = t0
    if with_dns:
        out.append(_lan_pkt(t, src_mac, src_ip, UPSTREAM_RESOLVER_IP, IpProtocol.UDP,
                            sport, 53, encode_dns_query(rng.randrange(65536), hostname)))
        t += 0.05
    out.append(_lan_pkt(t, src_mac, src_ip, dst_ip, IpProtocol.TCP, sport, 443,
                        flags=TcpFlags(syn=True)))
    t += 0.03
    out.append(_lan_pkt(t, src_mac, src_ip, dst_ip, IpProtocol.TCP, sport, 443,
                        flags=TcpFlags(ack=True)))
    t += 0.02
    for _ in range(2):
        size = int(rng.randrange(120, 420) * size_scale)
        out.append(_lan_pkt(t, src_mac, src_ip, dst_ip, IpProtocol.TCP, sport, 443,
                            payload=rng.randbytes(size), flags=TcpFlags(ack=True)))
        t += 0.25
    out.append(_lan_pkt(t, src_mac, src_ip, dst_ip, IpProtocol.TCP, sport, 443,
                        flags=TcpFlags(fin=True, ack=True)))
    return out


def schedule_benign(
    h: Harness,
    device_id: str,
    until: float,
    period: float = 300.0,
    tag: Optional[str] = None,
) -> None:
    """Emit periodic cloud chatter for a device until a virtual deadline.

    Sessions fire every `period` seconds (plus small deterministic jitter
    drawn from the harness rng); a session is skipped while the device is
    disconnected. Every 4th session refreshes DNS.
    """
    dev = h.devices[device_id]
    host = dev.cloud_host
    label = tag or f"benign:{device_id}"
    counter = {"n": 0}
    rng = random.Random((h.seed << 8) ^ zlib.crc32(device_id.encode()))

    def fire():
        t = h.clock
        if t > until:
            return
        if dev.connected:
            dst_ip = h.dns_zone.get(host)
            if dst_ip is None:
                dst_ip = f"198.51.100.{10 + len(h.dns_zone) % 240}"
                h.register_host(host, dst_ip, tcp_open={443})
            sport = 32000 + counter["n"] % 8000
            pkts = chatter_session(dev.mac, dev.assigned_ip, dst_ip, host,
                                   t + 0.01, rng, sport, with_dns=counter["n"] % 4 == 0)
            for p in pkts:
                h._push(p.timestamp, "lan", (p, label))
        counter["n"] += 1
        next_t = t + period + rng.uniform(-0.05, 0.05) * period
        if next_t <= until:
            h._push(next_t, "call", fire)

    h._push(h.clock + period * 0.1, "call", fire)


def build_template(profile: str, seed: int = 7, duration: float = 120.0) -> Trace:
    """Builtin template trace for a traffic profile, starting at t=0.

    echo: sparse TLS-like keepalives to one cloud host.
    google_home: TCP/5228 keepalives plus UDP/443 bursts to distinct hosts.
    camera: sustained high-rate TCP/443 upload (a video stream).
    """
    rng = random.Random(seed)
    pkts: list[PacketRecord] = []
    if profile == "echo":
        (host, ip, _), = PROFILE_HOSTS["echo"]
        t = 0.0
        n = 0
        while t < duration:
            pkts.extend(chatter_session(TEMPLATE_MAC, TEMPLATE_IP, ip, host, t, rng,
                                        sport=33000 + n % 4000, with_dns=n % 4 == 0))
            n += 1
            t += 20.0
    elif profile == "google_home":
        (api_host, api_ip, _), (quic_host, quic_ip, _) = PROFILE_HOSTS["google_home"]
        pkts.append(_lan_pkt(0.0, TEMPLATE_MAC, TEMPLATE_IP, UPSTREAM_RESOLVER_IP,
                             IpProtocol.UDP, 34000, 53, encode_dns_query(11, api_host)))
        pkts.append(_lan_pkt(0.1, TEMPLATE_MAC, TEMPLATE_IP, UPSTREAM_RESOLVER_IP,
                             IpProtocol.UDP, 34000, 53, encode_dns_query(12, quic_host)))
        t = 0.5
        while t < duration:
            pkts.append(_lan_pkt(t, TEMPLATE_MAC, TEMPLATE_IP, api_ip, IpProtocol.TCP,
                                 34001, 5228, payload=rng.randbytes(rng.randrange(80, 300)),
                                 flags=TcpFlags(ack=True)))
            for k in range(3):
                pkts.append(_lan_pkt(t + 1.0 + 0.2 * k, TEMPLATE_MAC, TEMPLATE_IP, quic_ip,
                                     IpProtocol.UDP, 34002, 443,
                                     payload=rng.randbytes(1200)))
            t += 10.0
        pkts.sort(key=lambda p: p.timestamp)
    elif profile == "camera":
        (host, ip, _), = PROFILE_HOSTS["camera"]
        pkts.append(_lan_pkt(0.0, TEMPLATE_MAC, TEMPLATE_IP, UPSTREAM_RESOLVER_IP,
                             IpProtocol.UDP, 35000, 53, encode_dns_query(21, host)))
        pkts.append(_lan_pkt(0.2, TEMPLATE_MAC, TEMPLATE_IP, ip, IpProtocol.TCP,
                             35001, 443, flags=TcpFlags(syn=True)))
        t = 0.3
        while t < duration:
            pkts.append(_lan_pkt(t, TEMPLATE_MAC, TEMPLATE_IP, ip, IpProtocol.TCP,
                                 35001, 443, payload=rng.randbytes(1000),
                                 flags=TcpFlags(ack=True)))
            t += 0.025  # 40 pps upload stream
    else:
        raise ValueError(f"unknown profile {profile!r}")
    meta = TraceMetadata(link_id=f"template:{profile}")
    return Trace(pkts, metadata=meta)


# ---------------------------------------------------------------- catalog

_VENDORS = {
    DeviceCategory.CAMERA: ["ViewCam", "SafeSight", "PerchEye"],
    DeviceCategory.HOME_AUTOMATION: ["PlugWise", "HeatSmart", "LumenX", "AiroSense"],
    DeviceCategory.HUB: ["HomeBase", "LinkCore"],
    DeviceCategory.SPEAKER: ["EchoLine", "CastBox"],
    DeviceCategory.VIDEO: ["StreamBar"],
}

_CATEGORY_COUNTS = {
    DeviceCategory.CAMERA: 12,
    DeviceCategory.HOME_AUTOMATION: 39,
    DeviceCategory.HUB: 10,
    DeviceCategory.SPEAKER: 13,
    DeviceCategory.VIDEO: 5,
}

_OUI = {
    "ViewCam": "a4:11:20",
    "SafeSight": "a4:11:21",
    "PerchEye": "a4:11:22",
    "PlugWise": "a4:22:30",
    "HeatSmart": "a4:22:31",
    "LumenX": "a4:22:32",
    "AiroSense": "a4:22:33",
    "HomeBase": "a4:33:40",
    "LinkCore": "a4:33:41",
    "EchoLine": "a4:44:50",
    "CastBox": "a4:44:51",
    "StreamBar": "a4:55:60",
}


def make_catalog(counts: Optional[dict[DeviceCategory, int]] = None) -> list[DeviceDescriptor]:
    """Deterministic builtin device catalog (defaults to the full 79)."""
    counts = counts or _CATEGORY_COUNTS
    devices = []
    serial = 0
    for category, total in counts.items():
        vendors = _VENDORS[category]
        for i in range(total):
            vendor = vendors[i % len(vendors)]
            model = f"{vendor} {category.value.title().replace('_', ' ')} {i // len(vendors) + 1}"
            serial += 1
            dev_id = f"{vendor.lower()}-{category.value.lower()}-{i}"
            mac = f"{_OUI[vendor]}:{serial // 65536:02x}:{(serial // 256) % 256:02x}:{serial % 256:02x}"
            # fact coverage varies: ~2/3 expose a hostname, some announce
            # services, a few are silent
            hostname = f"{vendor.lower()}-{i:02d}" if i % 3 != 2 else None
            mdns = ()
            if category is DeviceCategory.SPEAKER and i % 2 == 0:
                mdns = ("_googlecast._tcp",)
            elif category is DeviceCategory.CAMERA and i % 4 == 0:
                mdns = ("_rtsp._tcp",)
            upnp = None
            if category in (DeviceCategory.HUB, DeviceCategory.VIDEO) and i % 2 == 0:
                upnp = f"urn:schemas-upnp-org:device:{vendor}:1"
            devices.append(DeviceDescriptor(
                id=dev_id,
                mac=mac,
                category=category,
                true_label=model,
                dhcp_hostname=hostname,
                dhcp_param_order=(1, 3, 6, 12, 15, 26, 28) if i % 2 == 0 else (1, 3, 6, 15),
                mdns_services=mdns,
                upnp_device_type=upnp,
            ))
    return devices
