import pytest

from safeguard_bench.adapters import NullSafeguard
from safeguard_bench.benign import make_catalog
from safeguard_bench.harness import (
    DROP,
    DeviceCategory,
    DeviceDescriptor,
    Direction,
    DuplicateMacError,
    Harness,
    InjectPoint,
    SAFEGUARD_WAN_IP,
    TimeInPastError,
    UPSTREAM_RESOLVER_IP,
    build_topology,
    spoof_replay,
)
from safeguard_bench.packets import CapturePoint, IpProtocol, PacketRecord, TcpFlags
from safeguard_bench.payloads import encode_dns_query, parse_dhcp


def _dev(i=0, **over):
    base = dict(
        id=f"dev{i}",
        mac=f"aa:00:00:00:00:{i + 1:02x}",
        category=DeviceCategory.CAMERA,
        true_label=f"Cam Model {i}",
        dhcp_hostname=f"cam-{i}",
        dhcp_param_order=(1, 3, 6),
    )
    base.update(over)
    return DeviceDescriptor(**base)


def _lan_udp(ts, dev, dst_ip, sport, dport, payload=b"hello"):
    return PacketRecord(
        timestamp=ts, src_mac=dev.mac, dst_mac="02:5a:fe:00:00:01",
        src_ip=dev.assigned_ip, dst_ip=dst_ip, ip_protocol=IpProtocol.UDP,
        src_port=sport, dst_port=dport, payload=payload,
    )


def test_empty_topology():
    h = build_topology([], NullSafeguard(), seed=1)
    assert h.clock == 0.0
    assert len(h.capture(CapturePoint.GATEWAY)) == 0
    assert len(h.capture(CapturePoint.IOT_BRIDGE)) == 0


def test_79_device_catalog_builds_disconnected():
    devices = make_catalog()
    assert len(devices) == 79
    by_cat = {}
    for d in devices:
        by_cat[d.category] = by_cat.get(d.category, 0) + 1
    assert by_cat == {
        DeviceCategory.CAMERA: 12,
        DeviceCategory.HOME_AUTOMATION: 39,
        DeviceCategory.HUB: 10,
        DeviceCategory.SPEAKER: 13,
        DeviceCategory.VIDEO: 5,
    }
    h = build_topology(devices, NullSafeguard(), seed=3)
    assert all(not d.connected for d in h.devices.values())


def test_duplicate_mac_rejected():
    with pytest.raises(DuplicateMacError):
        build_topology([_dev(0), _dev(1, mac="aa:00:00:00:00:01")], NullSafeguard(), seed=1)


def test_connect_emits_four_dhcp_packets():
    dev = _dev()
    h = build_topology([dev], NullSafeguard(), seed=1)
    ip = h.connect_device("dev0")
    assert dev.connected and dev.assigned_ip == ip
    bridge = h.capture(CapturePoint.IOT_BRIDGE)
    dhcp = [p for p in bridge if p.is_udp() and {p.src_port, p.dst_port} == {67, 68}]
    assert len(dhcp) == 4
    types = [parse_dhcp(p.payload).msg_type for p in dhcp]
    assert types == [1, 2, 3, 5]  # DISCOVER, OFFER, REQUEST, ACK


def test_connect_twice_errors():
    h = build_topology([_dev()], NullSafeguard(), seed=1)
    h.connect_device("dev0")
    with pytest.raises(Exception):
        h.connect_device("dev0")


def test_mdns_announcement_present():
    dev = _dev(mdns_services=("_googlecast._tcp",))
    h = build_topology([dev], NullSafeguard(), seed=1)
    h.connect_device("dev0")
    bridge = h.capture(CapturePoint.IOT_BRIDGE)
    mdns = [p for p in bridge if p.is_udp() and p.dst_port == 5353]
    assert len(mdns) == 1
    assert b"_googlecast" in mdns[0].payload


def test_inject_lan_passthrough_and_nat():
    dev = _dev()
    h = build_topology([dev], NullSafeguard(), seed=1)
    h.connect_device("dev0")
    t0 = h.clock
    pkt = _lan_udp(t0 + 1.0, dev, "203.0.113.99", 5555, 9999)
    h.inject(InjectPoint.IOT_LAN_SIDE, [pkt])
    h.advance_clock(2.0)
    bridge = [p for p in h.capture(CapturePoint.IOT_BRIDGE, t0) if p.dst_ip == "203.0.113.99"]
    gw = [p for p in h.capture(CapturePoint.GATEWAY, t0) if p.dst_ip == "203.0.113.99"]
    assert len(bridge) == 1 and len(gw) == 1
    assert gw[0].src_ip == SAFEGUARD_WAN_IP
    assert gw[0].payload == pkt.payload
    assert gw[0].wire_len == pkt.wire_len


def test_drop_semantics():
    class Dropper(NullSafeguard):
        def process(self, packet, direction):
            return DROP

    dev = _dev()
    h = build_topology([dev], Dropper(), seed=1)
    # DHCP is scripted by the harness, so connect works even while dropping
    h.connect_device("dev0")
    t0 = h.clock
    h.inject(InjectPoint.IOT_LAN_SIDE, [_lan_udp(t0 + 1.0, dev, "203.0.113.99", 5555, 9999)])
    h.advance_clock(2.0)
    assert any(p.dst_ip == "203.0.113.99" for p in h.capture(CapturePoint.IOT_BRIDGE, t0))
    assert not any(p.dst_ip == "203.0.113.99" for p in h.capture(CapturePoint.GATEWAY, t0))


def test_inject_in_past_rejected():
    h = build_topology([_dev()], NullSafeguard(), seed=1)
    h.advance_clock(10.0)
    dev = h.devices["dev0"]
    with pytest.raises(TimeInPastError):
        h.inject(InjectPoint.IOT_LAN_SIDE, [PacketRecord(
            timestamp=5.0, src_mac=dev.mac, dst_mac="02:5a:fe:00:00:01",
            src_ip="192.168.7.20", dst_ip="203.0.113.1", ip_protocol=IpProtocol.UDP,
            src_port=1, dst_port=2,
        )])


def test_advance_zero_with_empty_queue():
    h = build_topology([], NullSafeguard(), seed=1)
    assert h.advance_clock(0.0) == 0


def test_tie_break_by_insertion_order():
    seen = []

    class Recorder(NullSafeguard):
        def process(self, packet, direction):
            if direction is Direction.LAN_TO_WAN and packet.payload in (b"A", b"B"):
                seen.append(packet.payload)
            return super().process(packet, direction)

    dev = _dev()
    h = build_topology([dev], Recorder(), seed=1)
    h.connect_device("dev0")
    t = h.clock + 1.0
    h.inject(InjectPoint.IOT_LAN_SIDE, [_lan_udp(t, dev, "203.0.113.9", 1000, 1, b"A")])
    h.inject(InjectPoint.IOT_LAN_SIDE, [_lan_udp(t, dev, "203.0.113.9", 1000, 1, b"B")])
    h.advance_clock(2.0)
    assert seen == [b"A", b"B"]


def _run_scenario(seed):
    dev = _dev()
    h = build_topology([dev], NullSafeguard(), seed=seed)
    h.connect_device("dev0")
    t0 = h.clock
    pkts = [_lan_udp(t0 + 0.5 + i * 0.1, dev, "203.0.113.50", 4000 + i, 53,
                     encode_dns_query(i, "x.example")) for i in range(20)]
    h.inject(InjectPoint.IOT_LAN_SIDE, pkts)
    h.advance_clock(10.0)
    return h


def test_determinism_same_seed_identical_captures():
    a, b = _run_scenario(42), _run_scenario(42)
    for point in CapturePoint:
        ta, tb = a.capture(point), b.capture(point)
        assert list(ta) == list(tb)


def test_conservation_under_null_safeguard():
    dev = _dev()
    h = build_topology([dev], NullSafeguard(), seed=5)
    h.connect_device("dev0")
    t0 = h.clock
    n = 25
    pkts = [_lan_udp(t0 + 0.1 + i * 0.01, dev, "203.0.113.60", 4000, 9000 + i) for i in range(n)]
    h.inject(InjectPoint.IOT_LAN_SIDE, pkts, tag="flow")
    h.advance_clock(5.0)
    bridge_out = [p for p in h.capture(CapturePoint.IOT_BRIDGE, t0) if p.dst_ip == "203.0.113.60"]
    gw_out = [p for p in h.capture(CapturePoint.GATEWAY, t0) if p.dst_ip == "203.0.113.60"]
    assert len(bridge_out) == n and len(gw_out) == n


def test_nat_bijectivity():
    dev = _dev()
    h = build_topology([dev], NullSafeguard(), seed=5)
    h.connect_device("dev0")
    t0 = h.clock
    pkts = [_lan_udp(t0 + 0.1 + i * 0.01, dev, "203.0.113.60", 4000 + i % 7, 9000 + i % 3)
            for i in range(30)]
    h.inject(InjectPoint.IOT_LAN_SIDE, pkts)
    h.advance_clock(5.0)
    nat = h.export_nat_map()
    assert len(set(nat.values())) == len(nat)  # injective
    lan_keys = {(p.src_ip, p.src_port, p.dst_ip, p.dst_port, p.ip_protocol) for p in pkts}
    assert lan_keys <= set(nat.keys())  # boot-burst flows add their own entries


def test_wan_inject_routed_to_device_and_reply_returns():
    dev = _dev(open_ports={23})
    h = build_topology([dev], NullSafeguard(), seed=2)
    ip = h.connect_device("dev0")
    t0 = h.clock
    syn = PacketRecord(
        timestamp=t0 + 1.0, src_mac="02:67:77:00:00:01", dst_mac="02:5a:fe:00:00:02",
        src_ip="198.18.0.9", dst_ip=ip, ip_protocol=IpProtocol.TCP,
        src_port=55555, dst_port=23, tcp_flags=TcpFlags(syn=True),
    )
    h.inject(InjectPoint.GATEWAY_SIDE, [syn])
    h.advance_clock(2.0)
    bridge = h.capture(CapturePoint.IOT_BRIDGE, t0)
    assert any(p.dst_ip == ip and p.dst_port == 23 for p in bridge)
    synack = [p for p in bridge if p.src_ip == ip and p.tcp_flags and p.tcp_flags.syn and p.tcp_flags.ack]
    assert len(synack) == 1


def test_dns_query_gets_answer():
    dev = _dev()
    h = build_topology([dev], NullSafeguard(), seed=2)
    h.register_host("cloud.example", "198.51.100.77", tcp_open={443})
    h.connect_device("dev0")
    t0 = h.clock
    q = _lan_udp(t0 + 1.0, dev, UPSTREAM_RESOLVER_IP, 5353, 53, encode_dns_query(77, "cloud.example"))
    h.inject(InjectPoint.IOT_LAN_SIDE, [q])
    h.advance_clock(2.0)
    answers = [p for p in h.capture(CapturePoint.IOT_BRIDGE, t0)
               if p.is_udp() and p.src_port == 53 and p.dst_ip == dev.assigned_ip
               and p.dst_port == 5353]
    assert len(answers) == 1
    assert b"cloud" in answers[0].payload


def test_udp_to_closed_port_triggers_icmp_unreachable():
    dev = _dev()
    h = build_topology([dev], NullSafeguard(), seed=2)
    h.register_host("web.victim.example", "203.0.113.80", tcp_open={80, 443})
    h.connect_device("dev0")
    t0 = h.clock
    h.inject(InjectPoint.IOT_LAN_SIDE, [_lan_udp(t0 + 1.0, dev, "203.0.113.80", 6000, 443)])
    h.advance_clock(2.0)
    icmp = [p for p in h.capture(CapturePoint.IOT_BRIDGE, t0) if p.ip_protocol is IpProtocol.ICMP]
    assert len(icmp) == 1
    assert icmp[0].dst_ip == dev.assigned_ip


def test_spoof_replay_rewrites_src_preserves_gaps():
    from safeguard_bench.packets import Trace

    dev = _dev()
    h = build_topology([dev], NullSafeguard(), seed=2)
    h.connect_device("dev0")
    template = Trace([
        _lan_udp(0.0, _dev(5, mac="bb:00:00:00:00:01"), "203.0.113.7", 1, 2)
    ])
    # template src was never connected; rebuild with literal fields
    tmpl_pkts = [
        PacketRecord(timestamp=t, src_mac="bb:00:00:00:00:01", dst_mac="02:5a:fe:00:00:01",
                     src_ip="192.168.7.99", dst_ip="203.0.113.7", ip_protocol=IpProtocol.UDP,
                     src_port=1, dst_port=2)
        for t in (0.0, 0.5, 2.0)
    ]
    out = spoof_replay(Trace(tmpl_pkts), h.devices["dev0"], time_base=100.0)
    assert [p.timestamp for p in out] == [100.0, 100.5, 102.0]
    assert all(p.src_mac == dev.mac and p.src_ip == dev.assigned_ip for p in out)
    assert all(p.dst_ip == "203.0.113.7" for p in out)
    assert spoof_replay(Trace([]), h.devices["dev0"], 5.0) == []


def test_capture_window_boundary_excluded():
    dev = _dev()
    h = build_topology([dev], NullSafeguard(), seed=2)
    h.connect_device("dev0", emit_boot_burst=False)
    h.advance_clock(3.0)
    h.clear_captures()
    t0 = h.clock
    h.inject(InjectPoint.IOT_LAN_SIDE, [_lan_udp(t0 + 1.0, dev, "203.0.113.9", 1, 2)])
    h.advance_clock(2.0)
    full = h.capture(CapturePoint.IOT_BRIDGE, t0)
    boundary = h.capture(CapturePoint.IOT_BRIDGE, t0, t0 + 1.0)
    assert len(full) == 1 and len(boundary) == 0
