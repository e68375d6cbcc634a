#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "netwarden/pcap.hpp"
#include "netwarden/serialize.hpp"
#include "testutil.hpp"

#ifndef NETWARDEN_TEST_DATA_DIR
#define NETWARDEN_TEST_DATA_DIR "tests/data"
#endif

namespace netwarden {
namespace {

std::string fixture(const std::string& name) {
  return std::string(NETWARDEN_TEST_DATA_DIR) + "/" + name;
}

EventTrace extract_fixture(const std::string& name, const FilterPolicy& policy = {}) {
  return extract_events_file(fixture(name), policy, name);
}

// Expected values below were frozen from the fixture generator's independent
// dissection (tests/data/gen_fixtures.py).

TEST(PcapIngest, DnsQueryDecodes) {
  const EventTrace t = extract_fixture("dns_query.pcap");
  ASSERT_EQ(t.events.size(), 1u);
  const NetworkEvent& e = t.events[0];
  EXPECT_EQ(e.type, EventType::DNS_Q);
  EXPECT_EQ(e.src, "172.25.7.2");
  EXPECT_EQ(e.dst, "8.8.8.8");
  EXPECT_EQ(e.sport, 53122);
  EXPECT_EQ(e.dport, 53);
  EXPECT_EQ(e.transport, Transport::UDP);
  EXPECT_EQ(*e.attrs.find("qname"), "api.example.com");
  EXPECT_EQ(t.origin, TraceOrigin::PcapOnly);
}

TEST(PcapIngest, DnsPairRendersTheCanonicalExample) {
  const EventTrace t = extract_fixture("dns_pair.pcap");
  ASSERT_EQ(t.events.size(), 2u);
  EXPECT_EQ(t.events[1].type, EventType::DNS_A);
  EXPECT_EQ(*t.events[1].attrs.find("answer_ip"), "93.184.216.34");
  EXPECT_EQ(serialize_trace(t), testutil::kSpecExampleText);
}

TEST(PcapIngest, MultipleAnswersLandInNumberedAttrs) {
  const EventTrace t = extract_fixture("dns_multi_answer.pcap");
  ASSERT_EQ(t.events.size(), 1u);
  EXPECT_EQ(*t.events[0].attrs.find("answer_ip"), "198.51.100.1");
  EXPECT_EQ(*t.events[0].attrs.find("answer_ip2"), "198.51.100.2");
  EXPECT_EQ(*t.events[0].attrs.find("answer_ip3"), "198.51.100.3");
}

TEST(PcapIngest, TlsClientHelloCarriesSni) {
  const EventTrace t = extract_fixture("tls_clienthello.pcap");
  ASSERT_EQ(t.events.size(), 1u);
  EXPECT_EQ(t.events[0].type, EventType::TLS_CH);
  EXPECT_EQ(t.events[0].dport, 443);
  EXPECT_EQ(*t.events[0].attrs.find("sni"), "api.example.com");
}

TEST(PcapIngest, IcmpEchoPair) {
  const EventTrace t = extract_fixture("icmp_echo.pcap");
  ASSERT_EQ(t.events.size(), 2u);
  EXPECT_EQ(t.events[0].type, EventType::ICMP_ECHO_REQ);
  EXPECT_EQ(t.events[0].src, "172.25.24.12");
  EXPECT_EQ(t.events[0].dst, "172.25.24.3");
  EXPECT_EQ(*t.events[0].attrs.find("payload_len"), "56");
  EXPECT_EQ(t.events[1].type, EventType::ICMP_ECHO_REPLY);
  EXPECT_EQ(t.events[0].transport, Transport::ICMP);
}

TEST(PcapIngest, ArpPair) {
  const EventTrace t = extract_fixture("arp_pair.pcap");
  ASSERT_EQ(t.events.size(), 2u);
  EXPECT_EQ(t.events[0].type, EventType::ARP_REQ);
  EXPECT_EQ(t.events[0].src, "172.25.24.12");
  EXPECT_EQ(*t.events[0].attrs.find("arp_target_ip"), "172.25.24.3");
  EXPECT_EQ(t.events[1].type, EventType::ARP_REPLY);
  EXPECT_EQ(*t.events[1].attrs.find("arp_sender_ip"), "172.25.24.3");
  EXPECT_EQ(*t.events[1].attrs.find("arp_sender_mac"), "02:42:ac:19:18:03");
  EXPECT_EQ(t.events[0].transport, Transport::ARP);
}

TEST(PcapIngest, SnmpDatagram) {
  const EventTrace t = extract_fixture("snmp_datagram.pcap");
  ASSERT_EQ(t.events.size(), 1u);
  EXPECT_EQ(t.events[0].type, EventType::SNMP_REQ);
  EXPECT_EQ(t.events[0].dport, 161);
  EXPECT_EQ(*t.events[0].attrs.find("payload_len"), "13");
}

TEST(PcapIngest, ServicePortSynMapping) {
  const EventTrace t = extract_fixture("tcp_syns.pcap");
  const std::vector<EventType> expected = {
      EventType::SMTP_CONN, EventType::SMTP_CONN, EventType::FTP_CONN, EventType::SSH_CONN,
      EventType::SMB_CONN,  EventType::SMB_CONN,  EventType::RDP_CONN, EventType::DB_CONN,
      EventType::DB_CONN,   EventType::DB_CONN,   EventType::DB_CONN,  EventType::DB_CONN,
      EventType::TCP_CONN,
  };
  ASSERT_EQ(t.events.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(t.events[i].type, expected[i]) << "packet " << i;
    EXPECT_EQ(*t.events[i].attrs.find("tcp_flags"), "S") << "packet " << i;
  }
}

TEST(PcapIngest, PlaintextHttp) {
  const EventTrace t = extract_fixture("http_plain.pcap");
  ASSERT_EQ(t.events.size(), 2u);
  EXPECT_EQ(t.events[0].type, EventType::HTTP_REQ);
  EXPECT_EQ(*t.events[0].attrs.find("method"), "GET");
  EXPECT_EQ(*t.events[0].attrs.find("host"), "plain.example.org");
  EXPECT_EQ(*t.events[0].attrs.find("path"), "/index.html");
  EXPECT_EQ(t.events[1].type, EventType::HTTP_RESP);
  EXPECT_EQ(*t.events[1].attrs.find("status"), "200");
}

TEST(PcapIngest, UnclassifiedUdpBecomesDatagram) {
  const EventTrace t = extract_fixture("udp_other.pcap");
  ASSERT_EQ(t.events.size(), 1u);
  EXPECT_EQ(t.events[0].type, EventType::UDP_DGRAM);
  EXPECT_EQ(*t.events[0].attrs.find("payload_len"), "13");
}

TEST(PcapIngest, EmptyCaptureGivesEmptyTrace) {
  const EventTrace t = extract_fixture("empty.pcap");
  EXPECT_TRUE(t.events.empty());
}

TEST(PcapIngest, PcapngDecodesLikeClassic) {
  const EventTrace t = extract_fixture("mixed.pcapng");
  ASSERT_EQ(t.events.size(), 2u);
  EXPECT_EQ(t.events[0].type, EventType::DNS_Q);
  EXPECT_EQ(*t.events[0].attrs.find("qname"), "api.example.com");
  EXPECT_EQ(t.events[1].type, EventType::SMB_CONN);
}

TEST(PcapIngest, TruncatedRecordBecomesOtherNeverAHardFailure) {
  const EventTrace t = extract_fixture("truncated_tail.pcap");
  ASSERT_EQ(t.events.size(), 2u);
  EXPECT_EQ(t.events[0].type, EventType::UDP_DGRAM);
  EXPECT_EQ(t.events[1].type, EventType::OTHER);
  EXPECT_EQ(*t.events[1].attrs.find("truncated"), "1");
}

TEST(PcapIngest, FrameShorterThanItsHeadersIsFlagged) {
  const EventTrace t = extract_fixture("short_frame.pcap");
  ASSERT_EQ(t.events.size(), 1u);
  EXPECT_EQ(t.events[0].type, EventType::OTHER);
  EXPECT_EQ(*t.events[0].attrs.find("truncated"), "1");
  EXPECT_EQ(*t.events[0].attrs.find("pkt_len"), "60");
}

TEST(PcapIngest, MalformedHeaderThrows) {
  EXPECT_THROW(extract_events("not a capture at all"), MalformedCapture);
  EXPECT_THROW(extract_events(std::string(100, '\x7f')), MalformedCapture);
  EXPECT_THROW(extract_events(""), MalformedCapture);
}

TEST(PcapIngest, DeterministicAndOneEventPerPacket) {
  const std::string bytes = testutil::read_file(fixture("tcp_syns.pcap"));
  const EventTrace a = extract_events(bytes);
  const EventTrace b = extract_events(bytes);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.events.size(), 13u);  // one event per packet, nothing dropped
}

TEST(PcapIngest, AllDecodedEventsValidate) {
  for (const char* name :
       {"dns_pair.pcap", "tls_clienthello.pcap", "icmp_echo.pcap", "arp_pair.pcap",
        "snmp_datagram.pcap", "tcp_syns.pcap", "http_plain.pcap", "udp_other.pcap",
        "mixed.pcapng", "truncated_tail.pcap", "short_frame.pcap"}) {
    const EventTrace t = extract_fixture(name);
    for (const auto& e : t.events) {
      EXPECT_FALSE(validate_event(e).has_value())
          << name << ": " << serialize_event(e, 1, 2);
    }
  }
}

TEST(ApplyFilter, QnameSuffixMatch) {
  std::vector<NetworkEvent> events = {
      testutil::event(1.0, EventType::DNS_Q, "10.0.0.1", 50000, "8.8.8.8", 53, Transport::UDP,
                      {{"qname", "registry.npmjs.org"}}),
      testutil::event(2.0, EventType::DNS_Q, "10.0.0.1", 50001, "8.8.8.8", 53, Transport::UDP,
                      {{"qname", "api.example.com"}}),
      testutil::event(3.0, EventType::DNS_Q, "10.0.0.1", 50002, "8.8.8.8", 53, Transport::UDP,
                      {{"qname", "notnpmjs.org"}}),
  };
  FilterPolicy policy;
  policy.denied_qname_suffixes = {"npmjs.org"};
  const EventTrace out = apply_filter(make_trace(events, "f", TraceOrigin::PcapOnly), policy);
  ASSERT_EQ(out.events.size(), 2u);
  EXPECT_EQ(*out.events[0].attrs.find("qname"), "api.example.com");
  EXPECT_EQ(*out.events[1].attrs.find("qname"), "notnpmjs.org");  // no substring matches
}

TEST(ApplyFilter, EmptyPolicyIsIdentity) {
  const EventTrace t = extract_fixture("tcp_syns.pcap");
  const EventTrace out = apply_filter(t, FilterPolicy{});
  EXPECT_EQ(out.events, t.events);
}

TEST(ApplyFilter, DropsLoopbackPairsAndKeepsOrder) {
  std::vector<NetworkEvent> events;
  for (int i = 0; i < 5; ++i) {
    const bool loop = i == 1 || i == 3;
    events.push_back(testutil::event(
        1.0 + i, EventType::UDP_DGRAM, loop ? "127.0.0.1" : "10.0.0.1", 1000 + i,
        loop ? "127.0.0.2" : "10.0.0.2", 2000, Transport::UDP, {{"pkt_len", std::to_string(i)}}));
  }
  FilterPolicy policy;
  policy.drop_proxy_internal = true;
  const EventTrace out = apply_filter(make_trace(events, "f", TraceOrigin::PcapOnly), policy);
  ASSERT_EQ(out.events.size(), 3u);
  EXPECT_EQ(*out.events[0].attrs.find("pkt_len"), "0");
  EXPECT_EQ(*out.events[1].attrs.find("pkt_len"), "2");
  EXPECT_EQ(*out.events[2].attrs.find("pkt_len"), "4");
}

TEST(ApplyFilter, HostAndPortPairRules) {
  std::vector<NetworkEvent> events = {
      testutil::event(1.0, EventType::TCP_CONN, "10.0.0.1", 40000, "203.0.113.9", 443,
                      Transport::TCP),
      testutil::event(2.0, EventType::TCP_CONN, "10.0.0.1", 40001, "203.0.113.9", 80,
                      Transport::TCP),
      testutil::event(3.0, EventType::TCP_CONN, "10.0.0.1", 40002, "198.51.100.5", 443,
                      Transport::TCP),
  };
  FilterPolicy by_host;
  by_host.denied_hosts = {"198.51.100.5"};
  EXPECT_EQ(apply_filter(make_trace(events, "f", TraceOrigin::PcapOnly), by_host).events.size(),
            2u);

  FilterPolicy by_pair;
  by_pair.denied_port_pairs = {{"203.0.113.9", 443}};
  const EventTrace out = apply_filter(make_trace(events, "f", TraceOrigin::PcapOnly), by_pair);
  ASSERT_EQ(out.events.size(), 2u);
  EXPECT_EQ(out.events[0].dport, 80);
  EXPECT_EQ(out.events[1].dst, "198.51.100.5");
}

TEST(ApplyFilter, Idempotent) {
  testutil::TestRng rng(3);
  std::vector<NetworkEvent> events;
  for (int i = 0; i < 200; ++i) events.push_back(testutil::random_event(rng));
  const EventTrace t = make_trace(events, "f", TraceOrigin::PcapOnly);
  const FilterPolicy policy = FilterPolicy::default_policy();
  const EventTrace once = apply_filter(t, policy);
  const EventTrace twice = apply_filter(once, policy);
  EXPECT_EQ(once.events, twice.events);
}

TEST(MapPacket, TotalOnArbitrarySummaries) {
  testutil::TestRng rng(17);
  for (int round = 0; round < 2000; ++round) {
    PacketSummary s;
    s.timestamp = static_cast<double>(rng.below(1000));
    s.pkt_len = rng.below(2000);
    s.net = static_cast<PacketSummary::Net>(rng.below(4));
    s.proto = static_cast<PacketSummary::Proto>(rng.below(5));
    s.src = "10.1.0.1";
    s.dst = "10.1.0.2";
    s.sport = static_cast<int>(rng.below(65536));
    s.dport = static_cast<int>(rng.below(65536));
    s.tcp_flags = static_cast<std::uint8_t>(rng.below(256));
    s.icmp_type = static_cast<int>(rng.below(256));
    s.arp_op = static_cast<int>(rng.below(4));
    s.arp_sender_ip = "10.1.0.1";
    s.arp_target_ip = "10.1.0.2";
    s.arp_sender_mac = "02:00:00:00:00:01";
    s.truncated = rng.below(10) == 0;
    s.non_first_fragment = rng.below(10) == 0;
    for (std::size_t i = rng.below(64); i > 0; --i) {
      s.payload.push_back(static_cast<char>(rng.below(256)));
    }
    s.l4_payload_len = s.payload.size();
    const NetworkEvent e = map_packet(s);
    EXPECT_FALSE(validate_event(e).has_value()) << serialize_event(e, 1, 2);
  }
}

TEST(PcapIngest, FilterPolicyJsonRoundTrip) {
  FilterPolicy p;
  p.denied_qname_suffixes = {"Example.COM"};
  p.denied_hosts = {"10.9.9.9"};
  p.denied_port_pairs = {{"10.9.9.8", 443}};
  p.drop_proxy_internal = true;
  const FilterPolicy back = FilterPolicy::from_json(p.to_json());
  EXPECT_EQ(back.denied_qname_suffixes, (std::vector<std::string>{"example.com"}));  // lowercased
  EXPECT_EQ(back.denied_hosts, p.denied_hosts);
  EXPECT_EQ(back.denied_port_pairs, p.denied_port_pairs);
  EXPECT_TRUE(back.drop_proxy_internal);
}

}  // namespace
}  // namespace netwarden
