#include <regex>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "netwarden/serialize.hpp"
#include "testutil.hpp"

#ifndef NETWARDEN_GOLDEN_DIR
#define NETWARDEN_GOLDEN_DIR "tests/golden"
#endif

namespace netwarden {
namespace {

using testutil::kNoonTs;

TEST(SerializeEvent, RendersTheCanonicalDnsPair) {
  const EventTrace trace = testutil::spec_example_trace();
  EXPECT_EQ(serialize_event(trace.events[0], 1, 2),
            "[01] 12:01:03 DNS_Q 172.25.7.2:53122->8.8.8.8:53 UDP qname=api.example.com");
  EXPECT_EQ(serialize_event(trace.events[1], 2, 2),
            "[02] 12:01:03 DNS_A 8.8.8.8:53->172.25.7.2:53122 UDP ip=93.184.216.34");
}

TEST(SerializeEvent, ProxyOriginatedEventsShowPortZero) {
  NetworkEvent e = testutil::event(kNoonTs, EventType::HTTP_REQ, "172.25.7.2", 0, "172.66.0.243",
                                   443, Transport::TCP,
                                   {{"method", "POST"},
                                    {"host", "172.66.0.243"},
                                    {"path", "/v1/chat/completions"}});
  EXPECT_EQ(serialize_event(e, 1, 2),
            "[01] 12:01:03 HTTP_REQ 172.25.7.2:0->172.66.0.243:443 TCP method=POST "
            "host=172.66.0.243 path=/v1/chat/completions");
}

TEST(SerializeEvent, ArpSummaries) {
  NetworkEvent req = testutil::event(kNoonTs, EventType::ARP_REQ, "172.25.24.12", 0, "172.25.24.3",
                                     0, Transport::ARP, {{"arp_target_ip", "172.25.24.3"}});
  EXPECT_EQ(serialize_event(req, 9, 2),
            "[09] 12:01:03 ARP_REQ 172.25.24.12:0->172.25.24.3:0 ARP who-has 172.25.24.3");

  NetworkEvent reply = testutil::event(kNoonTs, EventType::ARP_REPLY, "172.25.24.3", 0,
                                       "172.25.24.12", 0, Transport::ARP,
                                       {{"arp_sender_ip", "172.25.24.3"},
                                        {"arp_sender_mac", "02:42:ac:19:18:03"}});
  EXPECT_EQ(serialize_event(reply, 15, 2),
            "[15] 12:01:03 ARP_REPLY 172.25.24.3:0->172.25.24.12:0 ARP 172.25.24.3 is-at "
            "02:42:ac:19:18:03");
}

TEST(SerializeEvent, MultipleDnsAnswersRenderAsIp2Ip3) {
  NetworkEvent e = testutil::event(kNoonTs, EventType::DNS_A, "8.8.8.8", 53, "10.0.0.1", 50000,
                                   Transport::UDP,
                                   {{"answer_ip", "198.51.100.1"},
                                    {"answer_ip2", "198.51.100.2"},
                                    {"answer_ip3", "198.51.100.3"}});
  EXPECT_EQ(serialize_event(e, 1, 2),
            "[01] 12:01:03 DNS_A 8.8.8.8:53->10.0.0.1:50000 UDP ip=198.51.100.1 ip2=198.51.100.2 "
            "ip3=198.51.100.3");
}

TEST(SerializeEvent, DurationFormatting) {
  EXPECT_EQ(detail::format_real(854.2), "854.2");
  EXPECT_EQ(detail::format_real(1605.6), "1605.6");
  EXPECT_EQ(detail::format_real(100.0), "100");
  EXPECT_EQ(detail::format_real(0.125), "0.125");
  EXPECT_EQ(detail::format_real(2.50), "2.5");
}

TEST(SerializeEvent, TimezoneOffsetsShiftTheClock) {
  NetworkEvent e = testutil::event(kNoonTs, EventType::OTHER, "a", 0, "b", 0, Transport::NONE,
                                   {{"pkt_len", "1"}});
  EXPECT_EQ(serialize_event(e, 1, 2, TimeZoneOffset::parse("+05:30")).substr(5, 8), "17:31:03");
  EXPECT_EQ(serialize_event(e, 1, 2, TimeZoneOffset::parse("-08:00")).substr(5, 8), "04:01:03");
  EXPECT_EQ(serialize_event(e, 1, 2, TimeZoneOffset::parse("UTC")).substr(5, 8), "12:01:03");
  EXPECT_THROW(TimeZoneOffset::parse("PST"), SerializeError);
  EXPECT_THROW(TimeZoneOffset::parse("+25:00"), SerializeError);
}

TEST(SerializeTrace, MatchesTheTwoLineExample) {
  EXPECT_EQ(serialize_trace(testutil::spec_example_trace()), testutil::kSpecExampleText);
}

TEST(SerializeTrace, EmptyTraceIsEmptyText) {
  EventTrace empty;
  EXPECT_EQ(serialize_trace(empty), "");
}

TEST(SerializeTrace, WidthGrowsWithEventCount) {
  std::vector<NetworkEvent> events;
  for (int i = 0; i < 120; ++i) {
    events.push_back(testutil::event(kNoonTs + i, EventType::UDP_DGRAM, "10.0.0.1", 1000,
                                     "10.0.0.2", 2000, Transport::UDP, {{"pkt_len", "10"}}));
  }
  const std::string text = serialize_trace(make_trace(events, "w", TraceOrigin::Synthetic));
  EXPECT_EQ(text.substr(0, 5), "[001]");
  EXPECT_NE(text.find("\n[120] "), std::string::npos);
}

TEST(SerializeTrace, TruncationKeepsTheMostRecentEvents) {
  std::vector<NetworkEvent> events;
  for (int i = 0; i < 10; ++i) {
    events.push_back(testutil::event(kNoonTs + i, EventType::UDP_DGRAM, "172.25.7.2", 5310 + i,
                                     "10.9.9.9", 9999, Transport::UDP,
                                     {{"pkt_len", std::to_string(100 + i)}}));
  }
  const EventTrace trace = make_trace(events, "trunc", TraceOrigin::Synthetic);

  const std::string expected =
      "[... 6 earlier events truncated]\n"
      "[01] 12:01:09 UDP_DGRAM 172.25.7.2:5316->10.9.9.9:9999 UDP pkt_len=106\n"
      "[02] 12:01:10 UDP_DGRAM 172.25.7.2:5317->10.9.9.9:9999 UDP pkt_len=107\n"
      "[03] 12:01:11 UDP_DGRAM 172.25.7.2:5318->10.9.9.9:9999 UDP pkt_len=108\n"
      "[04] 12:01:12 UDP_DGRAM 172.25.7.2:5319->10.9.9.9:9999 UDP pkt_len=109";
  EXPECT_EQ(serialize_trace(trace, {}, 320), expected);
  EXPECT_LE(expected.size(), 320u);

  // a budget below the 4-line rendering drops one more event
  const std::string smaller = serialize_trace(trace, {}, expected.size() - 1);
  EXPECT_EQ(smaller.substr(0, 33), "[... 7 earlier events truncated]\n");
}

TEST(SerializeTrace, LinesMatchTheGrammar) {
  const std::regex line_re(R"(^\[\d+\] \d{2}:\d{2}:\d{2} \S+ .+$)");
  testutil::TestRng rng(7);
  for (int round = 0; round < 20; ++round) {
    std::vector<NetworkEvent> events;
    const std::size_t n = 1 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) events.push_back(testutil::random_event(rng));
    const EventTrace trace = make_trace(events, "g", TraceOrigin::Synthetic);
    const std::string text = serialize_trace(trace);

    std::size_t lines = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(start, end - start);
      EXPECT_TRUE(std::regex_match(line, line_re)) << line;
      EXPECT_FALSE(line.ends_with(' '));
      ++lines;
      if (end == text.size()) break;
      start = end + 1;
    }
    EXPECT_EQ(lines, trace.events.size());  // line count = event count when not truncated

    // every retained event's line appears verbatim
    const int width = std::max(2, detail::digit_count(trace.events.size()));
    for (std::size_t i = 0; i < trace.events.size(); ++i) {
      EXPECT_NE(text.find(serialize_event(trace.events[i], i + 1, width)), std::string::npos);
    }
  }
}

TEST(SerializeTrace, DeterministicAcrossRuns) {
  testutil::TestRng rng(11);
  std::vector<NetworkEvent> events;
  for (int i = 0; i < 64; ++i) events.push_back(testutil::random_event(rng));
  const EventTrace trace = make_trace(events, "d", TraceOrigin::Synthetic);
  EXPECT_EQ(serialize_trace(trace), serialize_trace(trace));
}

TEST(BuildPrompt, MatchesTheTemplateExactly) {
  TechniqueCatalog cat;
  cat.add({"Alpha_One", "T0001", "First description.", std::nullopt});

  const std::string expected =
      R"(You are a cybersecurity analyst detecting specific attack techniques from network traffic patterns.

TECHNIQUES:
- Alpha_One: First description.

NETWORK TRAFFIC:
[01] 12:01:03 DNS_Q 172.25.7.2:53122->8.8.8.8:53 UDP qname=api.example.com

Instructions:
1. Match the observed behavior to ONE specific technique from the list above.
2. Only return the EXACT technique name from the list, or "benign" if no attack detected. Nothing else should be returned.
)";
  const std::string context =
      "[01] 12:01:03 DNS_Q 172.25.7.2:53122->8.8.8.8:53 UDP qname=api.example.com";
  EXPECT_EQ(build_prompt(cat, context), expected);
}

TEST(BuildPrompt, GoldenFileForTheDefaultCatalog) {
  const std::string prompt =
      build_prompt(TechniqueCatalog::builtin_default(), testutil::kSpecExampleText);
  const std::string golden =
      testutil::read_file(std::string(NETWARDEN_GOLDEN_DIR) + "/prompt_default_catalog.txt");
  EXPECT_EQ(prompt, golden);
}

TEST(BuildPrompt, StructuralInvariants) {
  const TechniqueCatalog cat = TechniqueCatalog::builtin_default();
  const std::string context = testutil::kSpecExampleText;
  const std::string prompt = build_prompt(cat, context);

  // context appears exactly once
  const std::size_t first = prompt.find(context);
  ASSERT_NE(first, std::string::npos);
  EXPECT_EQ(prompt.find(context, first + 1), std::string::npos);

  // each catalog name appears exactly once in the TECHNIQUES section
  const std::string techniques_section =
      prompt.substr(0, prompt.find("NETWORK TRAFFIC:"));
  for (const auto& name : cat.names()) {
    const std::string bullet = "- " + name + ": ";
    const std::size_t pos = techniques_section.find(bullet);
    ASSERT_NE(pos, std::string::npos) << name;
    EXPECT_EQ(techniques_section.find(bullet, pos + 1), std::string::npos) << name;
  }

  // empty context is legal: the section is present but blank
  const std::string empty_ctx = build_prompt(cat, "");
  EXPECT_NE(empty_ctx.find("NETWORK TRAFFIC:\n\n\nInstructions:"), std::string::npos);

  EXPECT_THROW(build_prompt(TechniqueCatalog{}, context), EmptyCatalog);
}

TEST(BuildPrompt, BulletOrderFollowsCatalogOrder) {
  TechniqueCatalog ab;
  ab.add({"Aaa_Bbb", "T1", "one", std::nullopt});
  ab.add({"Ccc_Ddd", "T2", "two", std::nullopt});
  TechniqueCatalog ba;
  ba.add({"Ccc_Ddd", "T2", "two", std::nullopt});
  ba.add({"Aaa_Bbb", "T1", "one", std::nullopt});

  const std::string p1 = build_prompt(ab, "ctx");
  const std::string p2 = build_prompt(ba, "ctx");
  EXPECT_NE(p1, p2);
  EXPECT_LT(p1.find("Aaa_Bbb"), p1.find("Ccc_Ddd"));
  EXPECT_LT(p2.find("Ccc_Ddd"), p2.find("Aaa_Bbb"));
}

}  // namespace
}  // namespace netwarden
