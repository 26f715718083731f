import math

from safeguard_bench.packets import IpProtocol, PacketRecord
from safeguard_bench.payloads import (
    DhcpMessage,
    DHCP_DISCOVER,
    DHCP_OFFER,
    encode_dhcp,
    encode_dns_query,
    encode_dns_response,
    encode_ssdp_notify,
    icmp_echo,
    icmp_port_unreachable,
    icmp_quoted_datagram,
    icmp_type,
    is_icmp_port_unreachable,
    parse_dhcp,
    parse_dns,
    parse_ssdp_nt,
    shannon_entropy,
)


def test_dns_query_roundtrip():
    msg = parse_dns(encode_dns_query(0x1234, "api.vendor.example"))
    assert msg.txid == 0x1234
    assert not msg.is_response
    assert msg.qname == "api.vendor.example"


def test_dns_response_roundtrip():
    raw = encode_dns_response(9, "cloud.example", ["192.0.2.7", "192.0.2.8"])
    msg = parse_dns(raw)
    assert msg.is_response and msg.rcode == 0
    assert msg.a_records == [("cloud.example", "192.0.2.7"), ("cloud.example", "192.0.2.8")]


def test_dns_ptr_roundtrip():
    raw = encode_dns_response(1, "_googlecast._tcp.local", ptr_targets=["LivingRoomTV._googlecast._tcp.local"])
    msg = parse_dns(raw)
    assert msg.ptr_records[0][0] == "_googlecast._tcp.local"


def test_dns_garbage_returns_none():
    assert parse_dns(b"\x01\x02") is None
    assert parse_dns(b"\xff" * 40) is None


def test_dhcp_roundtrip():
    msg = DhcpMessage(
        msg_type=DHCP_DISCOVER,
        xid=0xDEADBEEF,
        client_mac="aa:bb:cc:dd:ee:ff",
        hostname="EchoSpot-7",
        param_req_list=(1, 3, 6, 15, 26),
    )
    back = parse_dhcp(encode_dhcp(msg))
    assert back.msg_type == DHCP_DISCOVER
    assert back.client_mac == "aa:bb:cc:dd:ee:ff"
    assert back.hostname == "EchoSpot-7"
    assert back.param_req_list == (1, 3, 6, 15, 26)


def test_dhcp_offer_carries_your_ip():
    msg = DhcpMessage(
        msg_type=DHCP_OFFER, xid=1, client_mac="aa:00:00:00:00:01",
        your_ip="192.168.7.20", server_id="192.168.7.1", dns_server="203.0.113.5",
    )
    back = parse_dhcp(encode_dhcp(msg))
    assert back.your_ip == "192.168.7.20"
    assert back.dns_server == "203.0.113.5"


def test_ssdp_nt_extraction():
    raw = encode_ssdp_notify("urn:dial-multiscreen-org:device:dial:1", "192.168.7.30")
    assert parse_ssdp_nt(raw) == "urn:dial-multiscreen-org:device:dial:1"


def test_icmp_unreachable_quotes_original():
    orig = PacketRecord(
        timestamp=5.0,
        src_mac="aa:00:00:00:00:01",
        dst_mac="aa:00:00:00:00:02",
        src_ip="100.64.0.2",
        dst_ip="203.0.113.10",
        ip_protocol=IpProtocol.UDP,
        src_port=20001,
        dst_port=443,
        payload=b"flood",
    )
    msg = icmp_port_unreachable(orig)
    pkt = PacketRecord(
        timestamp=5.001,
        src_mac="aa:00:00:00:00:02",
        dst_mac="aa:00:00:00:00:01",
        src_ip="203.0.113.10",
        dst_ip="100.64.0.2",
        ip_protocol=IpProtocol.ICMP,
        payload=msg,
    )
    assert is_icmp_port_unreachable(pkt)
    quoted = icmp_quoted_datagram(pkt.payload)
    assert quoted.src_ip == "100.64.0.2"
    assert (quoted.src_port, quoted.dst_port) == (20001, 443)


def test_icmp_echo_type():
    assert icmp_type(icmp_echo(1, 1)) == 8
    assert icmp_type(icmp_echo(1, 1, reply=True)) == 0


def test_entropy_extremes():
    assert shannon_entropy(b"") == 0.0
    assert shannon_entropy(b"a" * 100) == 0.0
    uniform = bytes(range(256)) * 4
    assert math.isclose(shannon_entropy(uniform), 8.0)
    text = b"GET /status HTTP/1.1\r\nHost: cam.example\r\n\r\n"
    assert shannon_entropy(text) < 6.0
