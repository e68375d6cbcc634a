#include <algorithm>
#include <filesystem>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "netwarden/catalog.hpp"
#include "netwarden/events.hpp"
#include "testutil.hpp"

#ifndef NETWARDEN_CONFIG_DIR
#define NETWARDEN_CONFIG_DIR "config"
#endif

namespace netwarden {
namespace {

using testutil::TestRng;

TEST(ValidateEvent, AcceptsWellFormedDnsQuery) {
  NetworkEvent e = testutil::event(1.0, EventType::DNS_Q, "10.0.0.1", 53122, "8.8.8.8", 53,
                                   Transport::UDP, {{"qname", "api.example.com"}});
  EXPECT_FALSE(validate_event(e).has_value());
}

TEST(ValidateEvent, RejectsArpOverTcp) {
  NetworkEvent e = testutil::event(1.0, EventType::ARP_REQ, "10.0.0.1", 0, "10.0.0.2", 0,
                                   Transport::TCP);
  auto err = validate_event(e);
  ASSERT_TRUE(err.has_value());
  EXPECT_EQ(err->kind, ValidationErrorKind::TypeTransportMismatch);
}

TEST(ValidateEvent, RejectsPortOutOfRange) {
  NetworkEvent e = testutil::event(1.0, EventType::UDP_DGRAM, "10.0.0.1", 70000, "10.0.0.2", 53,
                                   Transport::UDP);
  auto err = validate_event(e);
  ASSERT_TRUE(err.has_value());
  EXPECT_EQ(err->kind, ValidationErrorKind::InvalidPort);
}

TEST(ValidateEvent, RejectsNegativeTimestamp) {
  NetworkEvent e = testutil::event(-0.5, EventType::OTHER, "a", 0, "b", 0, Transport::NONE);
  auto err = validate_event(e);
  ASSERT_TRUE(err.has_value());
  EXPECT_EQ(err->kind, ValidationErrorKind::NegativeTimestamp);
}

TEST(ValidateEvent, RejectsDuplicateAttrKeys) {
  NetworkEvent e = testutil::event(1.0, EventType::OTHER, "a", 0, "b", 0, Transport::NONE);
  e.attrs = AttrMap::from_pairs({{"pkt_len", "1"}, {"pkt_len", "2"}});
  auto err = validate_event(e);
  ASSERT_TRUE(err.has_value());
  EXPECT_EQ(err->kind, ValidationErrorKind::DuplicateAttrKey);
}

TEST(ValidateEvent, DnsOverTcpIsLegal) {
  NetworkEvent e = testutil::event(1.0, EventType::DNS_Q, "10.0.0.1", 40000, "8.8.8.8", 53,
                                   Transport::TCP, {{"qname", "x.example.com"}});
  EXPECT_FALSE(validate_event(e).has_value());
}

TEST(CompareEvents, OrdersByTimestampThenRank) {
  NetworkEvent a = testutil::event(1.0, EventType::OTHER, "a", 0, "b", 0, Transport::NONE);
  NetworkEvent b = testutil::event(2.0, EventType::OTHER, "a", 0, "b", 0, Transport::NONE);
  EXPECT_LT(compare_events(a, 0, b, 1), 0);
  EXPECT_GT(compare_events(b, 0, a, 1), 0);

  NetworkEvent c = a;
  EXPECT_LT(compare_events(a, 3, c, 5), 0);  // stability on equal timestamps
  EXPECT_GT(compare_events(a, 5, c, 3), 0);
  EXPECT_EQ(compare_events(a, 3, c, 3), 0);
}

TEST(CompareEvents, SortingAnyPermutationReproducesTheTrace) {
  TestRng rng(42);
  for (int round = 0; round < 50; ++round) {
    std::vector<NetworkEvent> events;
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i) events.push_back(testutil::random_event(rng));
    EventTrace trace = make_trace(events, "t", TraceOrigin::Synthetic);

    // pair each trace event with its rank, shuffle, sort with compare_events
    std::vector<std::pair<NetworkEvent, std::size_t>> tagged;
    for (std::size_t i = 0; i < trace.events.size(); ++i) tagged.emplace_back(trace.events[i], i);
    for (std::size_t i = tagged.size(); i > 1; --i) {
      std::swap(tagged[i - 1], tagged[rng.below(i)]);
    }
    std::sort(tagged.begin(), tagged.end(), [](const auto& x, const auto& y) {
      return compare_events(x.first, x.second, y.first, y.second) < 0;
    });
    for (std::size_t i = 0; i < tagged.size(); ++i) {
      EXPECT_EQ(tagged[i].first, trace.events[i]);
      EXPECT_EQ(tagged[i].second, i);
    }
  }
}

TEST(AttrMap, IterationFollowsCanonicalOrder) {
  AttrMap m;
  m.set("ttl", "64");
  m.set("qname", "x.example.com");
  m.set("zzz_custom", "1");
  m.set("arp_target_ip", "10.0.0.9");
  m.set("method", "POST");

  std::vector<std::string> keys;
  for (const auto& [k, v] : m.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"qname", "method", "ttl", "arp_target_ip",
                                            "zzz_custom"}));
}

TEST(AttrMap, SetOverwritesInPlace) {
  AttrMap m;
  m.set("status", "200");
  m.set("status", "404");
  EXPECT_EQ(m.size(), 1u);
  EXPECT_EQ(*m.find("status"), "404");
}

TEST(DecryptedRecordValidation, EnforcesDirectionInvariants) {
  DecryptedRecord req;
  req.timestamp = 1.0;
  req.direction = Direction::Request;
  req.method = "POST";
  EXPECT_FALSE(validate_record(req).has_value());

  req.method.clear();
  EXPECT_TRUE(validate_record(req).has_value());

  DecryptedRecord resp;
  resp.timestamp = 1.0;
  resp.direction = Direction::Response;
  EXPECT_TRUE(validate_record(resp).has_value());  // missing status
  resp.status = 200;
  EXPECT_FALSE(validate_record(resp).has_value());
  resp.status = 700;
  EXPECT_TRUE(validate_record(resp).has_value());
}

TEST(Catalog, LoadSaveLoadRoundTrips) {
  const TechniqueCatalog cat = TechniqueCatalog::builtin_default();
  const auto path = std::filesystem::temp_directory_path() / "netwarden_catalog_rt.json";
  cat.save_file(path.string());
  const TechniqueCatalog again = TechniqueCatalog::load_file(path.string());
  EXPECT_TRUE(cat == again);
  again.save_file(path.string());
  EXPECT_TRUE(cat == TechniqueCatalog::load_file(path.string()));
  std::filesystem::remove(path);
}

TEST(Catalog, RejectsDuplicateAndMalformedNames) {
  TechniqueCatalog cat;
  cat.add({"Some_Technique", "T0001", "desc", std::nullopt});
  EXPECT_THROW(cat.add({"Some_Technique", "T0002", "again", std::nullopt}), CatalogError);
  EXPECT_THROW(cat.add({"has space", "T0003", "bad", std::nullopt}), CatalogError);
  EXPECT_THROW(cat.add({"_Leading", "T0004", "bad", std::nullopt}), CatalogError);
  EXPECT_THROW(cat.add({"Trailing_", "T0005", "bad", std::nullopt}), CatalogError);
  EXPECT_THROW(cat.add({"", "T0006", "bad", std::nullopt}), CatalogError);
}

TEST(Catalog, ShippedFileMatchesTheBuiltin) {
  const TechniqueCatalog shipped =
      TechniqueCatalog::load_file(std::string(NETWARDEN_CONFIG_DIR) + "/default_catalog.json");
  EXPECT_TRUE(shipped == TechniqueCatalog::builtin_default());
}

TEST(Catalog, BuiltinDefaultShipsTheFourPaperTechniques) {
  const TechniqueCatalog cat = TechniqueCatalog::builtin_default();
  EXPECT_EQ(cat.names(),
            (std::vector<std::string>{"Network_Device_Configuration_Dump", "Standard_Encoding",
                                      "Traffic_Signaling", "Web_Protocols"}));
  for (const auto& t : cat.techniques()) {
    EXPECT_TRUE(t.signature.has_value()) << t.name;
    EXPECT_FALSE(t.description.empty()) << t.name;
  }
}

TEST(Verdict, ValidityMatchesLabel) {
  EXPECT_TRUE(make_benign_verdict("t").valid);
  EXPECT_TRUE(make_technique_verdict("Traffic_Signaling", "t").valid);
  EXPECT_FALSE(make_invalid_verdict("garbage", "t").valid);
  EXPECT_FALSE(is_malicious(make_benign_verdict("t")));
  EXPECT_FALSE(is_malicious(make_invalid_verdict("x", "t")));
  EXPECT_TRUE(is_malicious(make_technique_verdict("Web_Protocols", "t")));
}

TEST(EventTypeVocabulary, RoundTripsAllNames) {
  for (EventType t : kAllEventTypes) {
    auto back = event_type_from_string(to_string(t));
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(*back, t);
  }
  EXPECT_FALSE(event_type_from_string("QUIC_HANDSHAKE").has_value());
}

}  // namespace
}  // namespace netwarden
