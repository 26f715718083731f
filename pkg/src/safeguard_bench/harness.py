"""Deterministic virtual-time simulation of the home-network topology.

One Harness instance models: gateway <-> [safeguard slot + NAT] <-> IoT
bridge <-> N devices, with capture buffers at GATEWAY and IOT_BRIDGE.
Internet endpoints are simulated responders that complete TCP handshakes,
answer DNS, and emit ICMP port-unreachable for closed UDP ports.

Everything is driven by a single event queue: (time, insertion seq) gives
a strict total order, so identical (topology, seed, injected traffic)
always reproduces identical capture buffers byte for byte.
"""

from __future__ import annotations

import enum
import heapq
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

from .packets import CapturePoint, IpProtocol, PacketRecord, TcpFlags, Trace, TraceMetadata
from . import payloads
from .payloads import (
    DHCP_ACK,
    DHCP_CLIENT_PORT,
    DHCP_DISCOVER,
    DHCP_OFFER,
    DHCP_REQUEST,
    DHCP_SERVER_PORT,
    DhcpMessage,
    encode_dhcp,
    encode_dns_response,
    encode_ssdp_notify,
    icmp_echo,
    icmp_port_unreachable,
    icmp_quoted_datagram,
    is_icmp_echo_request,
    parse_dns,
)


class HarnessError(Exception):
    pass


class DuplicateMacError(HarnessError):
    pass


class PoolExhaustedError(HarnessError):
    pass


class TimeInPastError(HarnessError):
    pass


class DeviceDisconnectedError(HarnessError):
    pass


class UnknownDeviceError(HarnessError):
    pass


class Direction(enum.Enum):
    LAN_TO_WAN = "LAN_TO_WAN"
    WAN_TO_LAN = "WAN_TO_LAN"


class InjectPoint(enum.Enum):
    GATEWAY_SIDE = "GATEWAY_SIDE"
    IOT_LAN_SIDE = "IOT_LAN_SIDE"


class DeviceCategory(enum.Enum):
    CAMERA = "CAMERA"
    HOME_AUTOMATION = "HOME_AUTOMATION"
    HUB = "HUB"
    SPEAKER = "SPEAKER"
    VIDEO = "VIDEO"


@dataclass
class DeviceDescriptor:
    """Static identity plus runtime connection state of one IoT device."""

    id: str
    mac: str
    category: DeviceCategory
    true_label: str
    dhcp_hostname: Optional[str] = None
    dhcp_param_order: tuple[int, ...] = ()
    mdns_services: tuple[str, ...] = ()
    upnp_device_type: Optional[str] = None
    open_ports: set[int] = field(default_factory=set)
    cloud_host: Optional[str] = None
    assigned_ip: Optional[str] = None
    connected: bool = False

    def __post_init__(self) -> None:
        if self.cloud_host is None:
            slug = "".join(c if c.isalnum() else "-" for c in self.true_label.lower())
            self.cloud_host = f"{slug}.cloud.example"


@dataclass
class ResponderHost:
    """A simulated Internet endpoint reachable through the gateway."""

    ip: str
    hostname: str = ""
    tcp_open: set[int] = field(default_factory=set)
    http_ports: set[int] = field(default_factory=set)
    udp_open: set[int] = field(default_factory=set)
    serves_dns: bool = False
    serves_doh: bool = False


@dataclass
class NatEntry:
    lan_ip: str
    lan_port: int
    remote_ip: str
    remote_port: int
    protocol: IpProtocol
    wan_port: int


TAG_SAFEGUARD = "safeguard"
TAG_RESPONDER = "responder"

IOT_SUBNET = "192.168.7."
ROUTER_LAN_IP = "192.168.7.1"
BRIDGE_HOST_IP = "192.168.7.254"
ROUTER_LAN_MAC = "02:5a:fe:00:00:01"
ROUTER_WAN_MAC = "02:5a:fe:00:00:02"
GATEWAY_MAC = "02:67:77:00:00:01"
SAFEGUARD_WAN_IP = "100.64.0.2"
UPSTREAM_RESOLVER_IP = "203.0.113.53"
UPSTREAM_RESOLVER_HOST = "resolver.isp.example"
POOL_FIRST, POOL_LAST = 20, 250


def in_iot_subnet(ip: str) -> bool:
    return ip.startswith(IOT_SUBNET)


def _is_local_dst(ip: str) -> bool:
    first = int(ip.split(".", 1)[0])
    return ip == "255.255.255.255" or 224 <= first <= 239


class SafeguardAdapter:
    """Contract for a safeguard under test (inline router position).

    Adapters see every LAN-originated packet (LAN_TO_WAN) and every
    packet arriving from the gateway side (WAN_TO_LAN), decide the
    forwarding verdict, raise alerts, and label devices. They may emit
    their own traffic through the services handle given to attach().
    """

    name = "adapter"
    claimed_threats: frozenset = frozenset()

    def attach(self, services: "HarnessServices") -> None:
        self.services = services

    def process(self, packet: PacketRecord, direction: Direction) -> "ForwardDecision":
        raise NotImplementedError

    def poll_alerts(self, since: float) -> list:
        return []

    def identify_devices(self) -> dict[str, str]:
        return {}

    def reset(self) -> None:
        """Factory reset: clear everything learned."""

    def begin_iteration(self) -> None:
        """Clear transient per-iteration counters; keep learned baselines."""


@dataclass(frozen=True)
class ForwardDecision:
    DROP = "DROP"
    FORWARD = "FORWARD"
    REWRITE = "REWRITE"

    verdict: str
    packets: tuple[PacketRecord, ...] = ()

    def __post_init__(self) -> None:
        if self.verdict == self.REWRITE and not self.packets:
            raise ValueError("REWRITE needs at least one packet")


FORWARD = ForwardDecision(ForwardDecision.FORWARD)
DROP = ForwardDecision(ForwardDecision.DROP)


def rewrite(*packets: PacketRecord) -> ForwardDecision:
    return ForwardDecision(ForwardDecision.REWRITE, tuple(packets))


class HarnessServices:
    """Facilities the harness exposes to an attached adapter."""

    def __init__(self, harness: "Harness") -> None:
        self._h = harness

    def now(self) -> float:
        return self._h.clock

    def schedule(self, time: float, fn: Callable[[], None]) -> None:
        self._h._push(time, "call", fn)

    def send_lan(self, packet: PacketRecord) -> None:
        """Emit a router-originated packet into the IoT-LAN (e.g. probes)."""
        self._h._push(packet.timestamp, "router_lan", (packet, TAG_SAFEGUARD))

    def send_wan(self, packet: PacketRecord) -> None:
        """Emit safeguard cloud traffic toward the Internet."""
        self._h._push(packet.timestamp, "router_wan", (packet, TAG_SAFEGUARD))

    def device_by_ip(self, ip: str) -> Optional[str]:
        d = self._h._device_by_ip.get(ip)
        return d.id if d else None

    def device_by_mac(self, mac: str) -> Optional[str]:
        d = self._h._device_by_mac.get(mac)
        return d.id if d else None

    def device_ids(self) -> list[str]:
        return list(self._h.devices)

    def denat(self, wan_packet: PacketRecord) -> Optional[tuple[str, int]]:
        """Map an inbound WAN packet back to (device_ip, lan_port)."""
        entry = self._h._reverse_nat(wan_packet)
        return (entry.lan_ip, entry.lan_port) if entry else None

    @property
    def router_lan_ip(self) -> str:
        return ROUTER_LAN_IP

    @property
    def router_lan_mac(self) -> str:
        return ROUTER_LAN_MAC

    @property
    def wan_ip(self) -> str:
        return SAFEGUARD_WAN_IP

    @property
    def upstream_resolver_ip(self) -> str:
        return UPSTREAM_RESOLVER_IP


class Harness:
    def __init__(self, devices: Sequence[DeviceDescriptor], safeguard: SafeguardAdapter, seed: int,
                 reply_delay: float = 0.001) -> None:
        self.clock = 0.0
        self.rng = random.Random(seed)
        self.seed = seed
        self.reply_delay = reply_delay
        self.adapter = safeguard
        self.devices: dict[str, DeviceDescriptor] = {}
        self._device_by_mac: dict[str, DeviceDescriptor] = {}
        self._device_by_ip: dict[str, DeviceDescriptor] = {}
        self._lease_by_mac: dict[str, str] = {}
        self._next_pool = POOL_FIRST
        self._queue: list = []
        self._seq = 0
        self._captures: dict[CapturePoint, list[tuple[PacketRecord, str]]] = {
            CapturePoint.GATEWAY: [],
            CapturePoint.IOT_BRIDGE: [],
        }
        self.nat_table: dict[tuple, NatEntry] = {}
        self._nat_by_wan: dict[tuple, NatEntry] = {}
        self._next_nat_port = 20000
        self.responders: dict[str, ResponderHost] = {}
        self.dns_zone: dict[str, str] = {}
        self.port_forward_target: Optional[str] = None
        self.adapter_faults: list[tuple[float, str]] = []
        self.unroutable = 0
        self._xid = 0

        for d in devices:
            if d.mac in self._device_by_mac:
                raise DuplicateMacError(f"duplicate mac {d.mac}")
            d.connected = False
            d.assigned_ip = None
            self.devices[d.id] = d
            self._device_by_mac[d.mac] = d

        self.register_host(UPSTREAM_RESOLVER_HOST, UPSTREAM_RESOLVER_IP, serves_dns=True)
        self.services = HarnessServices(self)
        self.adapter.attach(self.services)

    # ------------------------------------------------------------ setup

    def register_host(self, hostname: str, ip: str, tcp_open: Iterable[int] = (),
                      http_ports: Iterable[int] = (), udp_open: Iterable[int] = (),
                      serves_dns: bool = False, serves_doh: bool = False) -> ResponderHost:
        host = ResponderHost(
            ip=ip, hostname=hostname, tcp_open=set(tcp_open),
            http_ports=set(http_ports), udp_open=set(udp_open),
            serves_dns=serves_dns, serves_doh=serves_doh,
        )
        self.responders[ip] = host
        if hostname:
            self.dns_zone[hostname] = ip
        return host

    def set_port_forward(self, device_id: Optional[str]) -> None:
        if device_id is not None and device_id not in self.devices:
            raise UnknownDeviceError(device_id)
        self.port_forward_target = device_id

    # ------------------------------------------------------------ event core

    def _push(self, time: float, kind: str, data) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (time, self._seq, kind, data))

    def advance_clock(self, dt: float) -> int:
        if dt < 0:
            raise ValueError("dt must be >= 0")
        horizon = self.clock + dt
        return self._run_until(horizon)

    def _run_until(self, horizon: float) -> int:
        processed = 0
        while self._queue and self._queue[0][0] <= horizon:
            time, _seq, kind, data = heapq.heappop(self._queue)
            if time > self.clock:
                self.clock = time
            self._dispatch(kind, data)
            processed += 1
        if horizon > self.clock:
            self.clock = horizon
        return processed

    def _dispatch(self, kind: str, data) -> None:
        if kind == "lan":
            self._handle_lan(*data)
        elif kind == "wan":
            self._handle_wan(*data)
        elif kind == "router_lan":
            pkt, tag = data
            self._capture(CapturePoint.IOT_BRIDGE, pkt, tag)
            self._deliver_lan(pkt, tag)
        elif kind == "router_wan":
            pkt, tag = data
            self._capture(CapturePoint.GATEWAY, pkt, tag)
            self._respond(pkt, tag)
        elif kind == "call":
            data()
        else:  # pragma: no cover
            raise AssertionError(kind)

    def _capture(self, point: CapturePoint, pkt: PacketRecord, tag: str) -> None:
        self._captures[point].append((pkt.at_point(point), tag))

    def _process(self, pkt: PacketRecord, direction: Direction) -> ForwardDecision:
        try:
            return self.adapter.process(pkt, direction)
        except Exception as exc:  # adapter fault: record, fail open
            self.adapter_faults.append((self.clock, repr(exc)))
            return FORWARD

    # ------------------------------------------------------------ LAN path

    def _handle_lan(self, pkt: PacketRecord, tag: str) -> None:
        self._capture(CapturePoint.IOT_BRIDGE, pkt, tag)
        decision = self._process(pkt, Direction.LAN_TO_WAN)
        if decision.verdict == ForwardDecision.DROP:
            return
        outgoing = decision.packets if decision.verdict == ForwardDecision.REWRITE else (pkt,)
        for out in outgoing:
            self._route_from_lan(out, tag)

    def _route_from_lan(self, pkt: PacketRecord, tag: str) -> None:
        # DHCP requests are broadcast; the exchange itself is scripted by
        # connect_device, so they terminate here like any local traffic
        if _is_local_dst(pkt.dst_ip):
            return  # multicast/broadcast stays on the IoT-LAN
        if pkt.dst_ip == ROUTER_LAN_IP:
            return  # addressed to the safeguard itself (probe replies etc.)
        if in_iot_subnet(pkt.dst_ip):
            self._deliver_lan(pkt, tag)  # hairpin through the router
            return
        translated = self._nat_out(pkt)
        self._capture(CapturePoint.GATEWAY, translated, tag)
        self._respond(translated, tag)

    def _deliver_lan(self, pkt: PacketRecord, tag: str) -> None:
        dev = self._device_by_ip.get(pkt.dst_ip)
        if dev is None or not dev.connected:
            return
        self._device_react(dev, pkt, tag)

    def _device_react(self, dev: DeviceDescriptor, pkt: PacketRecord, tag: str) -> None:
        t = self.clock + self.reply_delay
        if pkt.is_tcp() and pkt.tcp_flags and pkt.tcp_flags.syn and not pkt.tcp_flags.ack:
            flags = TcpFlags(syn=True, ack=True) if pkt.dst_port in dev.open_ports else TcpFlags(rst=True, ack=True)
            self._push(t, "lan", (PacketRecord(
                timestamp=t, src_mac=dev.mac, dst_mac=pkt.src_mac,
                src_ip=dev.assigned_ip, dst_ip=pkt.src_ip,
                ip_protocol=IpProtocol.TCP, src_port=pkt.dst_port, dst_port=pkt.src_port,
                tcp_flags=flags,
            ), tag))
        elif is_icmp_echo_request(pkt):
            self._push(t, "lan", (PacketRecord(
                timestamp=t, src_mac=dev.mac, dst_mac=pkt.src_mac,
                src_ip=dev.assigned_ip, dst_ip=pkt.src_ip,
                ip_protocol=IpProtocol.ICMP,
                payload=icmp_echo(0, 0, pkt.payload[8:], reply=True),
            ), tag))
        # everything else terminates at the device

    # ------------------------------------------------------------ WAN path

    def _handle_wan(self, pkt: PacketRecord, tag: str) -> None:
        self._capture(CapturePoint.GATEWAY, pkt, tag)
        decision = self._process(pkt, Direction.WAN_TO_LAN)
        if decision.verdict == ForwardDecision.DROP:
            return
        if decision.verdict == ForwardDecision.REWRITE:
            for out in decision.packets:
                if in_iot_subnet(out.dst_ip):
                    self._capture(CapturePoint.IOT_BRIDGE, out, tag)
                    self._deliver_lan(out, tag)
                else:
                    self._route_from_lan(out, tag)
            return
        inbound = self._denat_in(pkt)
        if inbound is None:
            self.unroutable += 1
            return
        self._capture(CapturePoint.IOT_BRIDGE, inbound, tag)
        self._deliver_lan(inbound, tag)

    # ------------------------------------------------------------ NAT

    def _nat_out(self, pkt: PacketRecord) -> PacketRecord:
        if pkt.src_port is not None:
            key = (pkt.src_ip, pkt.src_port, pkt.dst_ip, pkt.dst_port, pkt.ip_protocol)
            entry = self.nat_table.get(key)
            if entry is None:
                entry = NatEntry(pkt.src_ip, pkt.src_port, pkt.dst_ip, pkt.dst_port,
                                 pkt.ip_protocol, self._next_nat_port)
                self._next_nat_port += 1
                self.nat_table[key] = entry
                self._nat_by_wan[(entry.wan_port, pkt.dst_ip, pkt.dst_port, pkt.ip_protocol)] = entry
            return replace(pkt, src_ip=SAFEGUARD_WAN_IP, src_port=entry.wan_port,
                           src_mac=ROUTER_WAN_MAC, dst_mac=GATEWAY_MAC)
        return replace(pkt, src_ip=SAFEGUARD_WAN_IP, src_mac=ROUTER_WAN_MAC, dst_mac=GATEWAY_MAC)

    def _reverse_nat(self, pkt: PacketRecord) -> Optional[NatEntry]:
        if pkt.dst_ip != SAFEGUARD_WAN_IP:
            return None
        if pkt.ip_protocol is IpProtocol.ICMP:
            quoted = icmp_quoted_datagram(pkt.payload)
            if quoted and quoted.src_port is not None:
                proto = IpProtocol.TCP if quoted.protocol == 6 else IpProtocol.UDP
                return self._nat_by_wan.get((quoted.src_port, quoted.dst_ip, quoted.dst_port, proto))
            return None
        if pkt.dst_port is None:
            return None
        return self._nat_by_wan.get((pkt.dst_port, pkt.src_ip, pkt.src_port, pkt.ip_protocol))

    def _denat_in(self, pkt: PacketRecord) -> Optional[PacketRecord]:
        entry = self._reverse_nat(pkt)
        if entry is not None:
            dev = self._device_by_ip.get(entry.lan_ip)
            dst_mac = dev.mac if dev else ROUTER_LAN_MAC
            if pkt.ip_protocol is IpProtocol.ICMP:
                return replace(pkt, dst_ip=entry.lan_ip, src_mac=ROUTER_LAN_MAC, dst_mac=dst_mac)
            return replace(pkt, dst_ip=entry.lan_ip, dst_port=entry.lan_port,
                           src_mac=ROUTER_LAN_MAC, dst_mac=dst_mac)
        if pkt.dst_ip == SAFEGUARD_WAN_IP and self.port_forward_target:
            dev = self.devices[self.port_forward_target]
            if dev.connected:
                return replace(pkt, dst_ip=dev.assigned_ip, src_mac=ROUTER_LAN_MAC, dst_mac=dev.mac)
            return None
        if in_iot_subnet(pkt.dst_ip):
            dev = self._device_by_ip.get(pkt.dst_ip)
            return replace(pkt, src_mac=ROUTER_LAN_MAC, dst_mac=dev.mac if dev else ROUTER_LAN_MAC)
        return None

    def export_nat_map(self) -> dict[tuple, tuple]:
        """Ground-truth LAN 5-tuple -> WAN 5-tuple mapping."""
        out = {}
        for entry in self.nat_table.values():
            lan = (entry.lan_ip, entry.lan_port, entry.remote_ip, entry.remote_port, entry.protocol)
            wan = (SAFEGUARD_WAN_IP, entry.wan_port, entry.remote_ip, entry.remote_port, entry.protocol)
            out[lan] = wan
        return out

    # ------------------------------------------------------------ responders

    def _respond(self, pkt: PacketRecord, tag: str) -> None:
        host = self.responders.get(pkt.dst_ip)
        if host is None:
            return
        t = self.clock + self.reply_delay

        def back(proto: IpProtocol, payload: bytes = b"", flags: Optional[TcpFlags] = None,
                 sport: Optional[int] = None, dport: Optional[int] = None) -> None:
            self._push(t, "wan", (PacketRecord(
                timestamp=t, src_mac=GATEWAY_MAC, dst_mac=ROUTER_WAN_MAC,
                src_ip=host.ip, dst_ip=pkt.src_ip, ip_protocol=proto,
                src_port=sport, dst_port=dport, tcp_flags=flags, payload=payload,
            ), TAG_RESPONDER))

        if pkt.is_tcp() and pkt.tcp_flags:
            if pkt.tcp_flags.syn and not pkt.tcp_flags.ack:
                if pkt.dst_port in host.tcp_open:
                    back(IpProtocol.TCP, flags=TcpFlags(syn=True, ack=True),
                         sport=pkt.dst_port, dport=pkt.src_port)
                else:
                    back(IpProtocol.TCP, flags=TcpFlags(rst=True, ack=True),
                         sport=pkt.dst_port, dport=pkt.src_port)
            elif pkt.payload:
                if pkt.dst_port in host.http_ports and pkt.payload.startswith(b"GET "):
                    body = b"HTTP/1.1 200 OK\r\nContent-Length: 2\r\n\r\nok"
                    back(IpProtocol.TCP, payload=body, flags=TcpFlags(ack=True),
                         sport=pkt.dst_port, dport=pkt.src_port)
                elif host.serves_doh and pkt.dst_port == 443:
                    answer = self._answer_dns(pkt.payload)
                    if answer is not None:
                        back(IpProtocol.TCP, payload=answer, flags=TcpFlags(ack=True),
                             sport=pkt.dst_port, dport=pkt.src_port)
        elif pkt.is_udp():
            if pkt.dst_port == 53 and host.serves_dns:
                answer = self._answer_dns(pkt.payload)
                if answer is not None:
                    back(IpProtocol.UDP, payload=answer, sport=53, dport=pkt.src_port)
            elif pkt.dst_port not in host.udp_open:
                back(IpProtocol.ICMP, payload=icmp_port_unreachable(pkt))

    def _answer_dns(self, query: bytes) -> Optional[bytes]:
        msg = parse_dns(query)
        if msg is None or msg.is_response or msg.qname is None:
            return None
        ip = self.dns_zone.get(msg.qname)
        if ip is None:
            return encode_dns_response(msg.txid, msg.qname, rcode=3)
        return encode_dns_response(msg.txid, msg.qname, [ip])

    # ------------------------------------------------------------ devices

    def connect_device(self, device_id: str, emit_boot_burst: bool = True) -> str:
        dev = self.devices.get(device_id)
        if dev is None:
            raise UnknownDeviceError(device_id)
        if dev.connected:
            raise HarnessError(f"{device_id} already connected")
        ip = self._lease_for(dev.mac)

        d = self.reply_delay
        t0 = self.clock
        self._xid += 1
        xid = self._xid
        bcast_mac = "ff:ff:ff:ff:ff:ff"

        def dhcp_pkt(ts, msg_type, src_dev: bool, your_ip="0.0.0.0"):
            msg = DhcpMessage(
                msg_type=msg_type, xid=xid, client_mac=dev.mac, your_ip=your_ip,
                hostname=dev.dhcp_hostname if src_dev and msg_type in (DHCP_DISCOVER, DHCP_REQUEST) else None,
                param_req_list=dev.dhcp_param_order if src_dev else (),
                requested_ip=ip if (src_dev and msg_type == DHCP_REQUEST) else None,
                server_id=ROUTER_LAN_IP if not src_dev else None,
                dns_server=UPSTREAM_RESOLVER_IP if msg_type == DHCP_ACK else None,
            )
            if src_dev:
                return PacketRecord(
                    timestamp=ts, src_mac=dev.mac, dst_mac=bcast_mac,
                    src_ip="0.0.0.0", dst_ip="255.255.255.255", ip_protocol=IpProtocol.UDP,
                    src_port=DHCP_CLIENT_PORT, dst_port=DHCP_SERVER_PORT, payload=encode_dhcp(msg),
                )
            return PacketRecord(
                timestamp=ts, src_mac=ROUTER_LAN_MAC, dst_mac=dev.mac,
                src_ip=ROUTER_LAN_IP, dst_ip=your_ip, ip_protocol=IpProtocol.UDP,
                src_port=DHCP_SERVER_PORT, dst_port=DHCP_CLIENT_PORT, payload=encode_dhcp(msg),
            )

        tag = f"dhcp:{device_id}"
        self._push(t0 + d, "lan", (dhcp_pkt(t0 + d, DHCP_DISCOVER, True), tag))
        self._push(t0 + 2 * d, "router_lan", (dhcp_pkt(t0 + 2 * d, DHCP_OFFER, False, ip), tag))
        self._push(t0 + 3 * d, "lan", (dhcp_pkt(t0 + 3 * d, DHCP_REQUEST, True), tag))
        self._push(t0 + 4 * d, "router_lan", (dhcp_pkt(t0 + 4 * d, DHCP_ACK, False, ip), tag))

        def finish():
            dev.assigned_ip = ip
            dev.connected = True
            self._device_by_ip[ip] = dev

        self._push(t0 + 4 * d, "call", finish)

        t = t0 + 5 * d
        ann_tag = f"announce:{device_id}"
        for svc in dev.mdns_services:
            self._push(t, "lan", (PacketRecord(
                timestamp=t, src_mac=dev.mac, dst_mac="01:00:5e:00:00:fb",
                src_ip=ip, dst_ip="224.0.0.251", ip_protocol=IpProtocol.UDP,
                src_port=payloads.MDNS_PORT, dst_port=payloads.MDNS_PORT,
                payload=encode_dns_response(0, svc + ".local",
                                            ptr_targets=[f"{dev.id}.{svc}.local"]),
            ), ann_tag))
            t += d
        if dev.upnp_device_type:
            self._push(t, "lan", (PacketRecord(
                timestamp=t, src_mac=dev.mac, dst_mac="01:00:5e:7f:ff:fa",
                src_ip=ip, dst_ip="239.255.255.250", ip_protocol=IpProtocol.UDP,
                src_port=50000, dst_port=payloads.SSDP_PORT,
                payload=encode_ssdp_notify(dev.upnp_device_type, ip),
            ), ann_tag))
            t += d

        if emit_boot_burst:
            self._schedule_boot_burst(dev, ip, t0 + 5 * d)

        # run the exchange and announcements now; the boot burst flows on
        # the caller's next advance
        self._run_until(t)
        return ip

    def _schedule_boot_burst(self, dev: DeviceDescriptor, ip: str, t0: float) -> None:
        host = dev.cloud_host
        cloud_ip = self.dns_zone.get(host)
        if cloud_ip is None:
            cloud_ip = f"198.51.100.{10 + len(self.dns_zone) % 240}"
            self.register_host(host, cloud_ip, tcp_open={443})
        tag = f"boot:{dev.id}"
        sport = 30000 + (sum(ord(c) for c in dev.id) % 20000)
        txid = self._xid * 7 % 65536

        def pkt(ts, **kw):
            base = dict(timestamp=ts, src_mac=dev.mac, dst_mac=ROUTER_LAN_MAC,
                        src_ip=ip, ip_protocol=IpProtocol.TCP)
            base.update(kw)
            return PacketRecord(**base)

        self._push(t0 + 0.10, "lan", (pkt(
            t0 + 0.10, dst_ip=UPSTREAM_RESOLVER_IP, ip_protocol=IpProtocol.UDP,
            src_port=sport, dst_port=53, payload=payloads.encode_dns_query(txid, host)), tag))
        self._push(t0 + 0.30, "lan", (pkt(
            t0 + 0.30, dst_ip=cloud_ip, src_port=sport, dst_port=443,
            tcp_flags=TcpFlags(syn=True)), tag))
        self._push(t0 + 0.50, "lan", (pkt(
            t0 + 0.50, dst_ip=cloud_ip, src_port=sport, dst_port=443,
            tcp_flags=TcpFlags(ack=True)), tag))
        body = self.rng.randbytes(180)
        self._push(t0 + 0.90, "lan", (pkt(
            t0 + 0.90, dst_ip=cloud_ip, src_port=sport, dst_port=443,
            tcp_flags=TcpFlags(ack=True), payload=body), tag))
        self._push(t0 + 1.50, "lan", (pkt(
            t0 + 1.50, dst_ip=cloud_ip, src_port=sport, dst_port=443,
            tcp_flags=TcpFlags(ack=True), payload=body[:90]), tag))

    def _lease_for(self, mac: str) -> str:
        ip = self._lease_by_mac.get(mac)
        if ip is not None:
            return ip
        if self._next_pool > POOL_LAST:
            raise PoolExhaustedError("DHCP pool exhausted")
        ip = f"{IOT_SUBNET}{self._next_pool}"
        self._next_pool += 1
        self._lease_by_mac[mac] = ip
        return ip

    def disconnect_device(self, device_id: str) -> None:
        dev = self.devices.get(device_id)
        if dev is None:
            raise UnknownDeviceError(device_id)
        if not dev.connected:
            return
        if dev.assigned_ip:
            self._device_by_ip.pop(dev.assigned_ip, None)
        dev.connected = False
        dev.assigned_ip = None

    # ------------------------------------------------------------ injection / capture

    def inject(self, point: InjectPoint, packets: Iterable[PacketRecord], tag: str = "inject") -> None:
        for pkt in packets:
            if pkt.timestamp < self.clock:
                raise TimeInPastError(f"packet at {pkt.timestamp} < clock {self.clock}")
            kind = "lan" if point is InjectPoint.IOT_LAN_SIDE else "wan"
            self._push(pkt.timestamp, kind, (pkt, tag))

    def capture(self, point: CapturePoint, t0: float = 0.0, t1: Optional[float] = None) -> Trace:
        """Packets observed at a point within [t0, t1); t1=None means the whole buffer."""
        if t1 is None:
            pkts = [p for p, _ in self._captures[point] if p.timestamp >= t0]
            t1 = self.clock
        else:
            if not (t0 <= t1 <= self.clock):
                raise ValueError("capture window must satisfy t0 <= t1 <= clock")
            pkts = [p for p, _ in self._captures[point] if t0 <= p.timestamp < t1]
        meta = TraceMetadata(capture_point=point, start_time=t0, end_time=t1)
        return Trace(pkts, metadata=meta)

    def capture_tagged(self, point: CapturePoint) -> list[tuple[PacketRecord, str]]:
        return list(self._captures[point])

    def clear_captures(self) -> None:
        for buf in self._captures.values():
            buf.clear()


def build_topology(devices: Sequence[DeviceDescriptor], safeguard: SafeguardAdapter, seed: int) -> Harness:
    return Harness(devices, safeguard, seed)


def spoof_replay(template: Trace, as_device: DeviceDescriptor, time_base: float) -> list[PacketRecord]:
    """Replay a template as if as_device had sent it.

    Source MAC/IP are rewritten to the device's; inter-packet gaps and all
    destination fields are preserved; the first packet lands at time_base.
    """
    if not as_device.connected:
        raise DeviceDisconnectedError(as_device.id)
    if len(template) == 0:
        return []
    t_first = template[0].timestamp
    out = []
    for p in template:
        out.append(replace(
            p,
            timestamp=time_base + (p.timestamp - t_first),
            src_mac=as_device.mac,
            src_ip=as_device.assigned_ip,
            capture_point=None,
        ))
    return out
