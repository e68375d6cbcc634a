#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "netwarden/detect.hpp"
#include "netwarden/events.hpp"
#include "netwarden/serialize.hpp"
#include "netwarden/trace_io.hpp"

namespace netwarden {

class SynthError : public Error {
 public:
  using Error::Error;
};

class UnknownTechnique : public SynthError {
 public:
  using SynthError::SynthError;
};

/// splitmix64-based generator. The standard distributions are not pinned
/// across library implementations, so all draws go through explicit integer
/// arithmetic and traces stay bit-identical on every host.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return n == 0 ? 0 : static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  /// Uniform double in [0, 1).
  double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

struct ModelEndpoint {
  std::string qname = "api.example.com";
  std::string ip = "172.66.0.243";
};

/// Shared addresses and shapes for synthetic sessions. The defaults mirror a
/// typical agent host talking to one chat-completions endpoint.
struct SynthProfile {
  int n_tool_calls = 1;
  std::vector<ModelEndpoint> endpoints = {ModelEndpoint{}};
  std::string client_ip = "172.25.7.2";
  std::string dns_server = "8.8.8.8";
  double base_timestamp = 1700000000.0;

  // attack-side addresses
  std::string attack_src = "172.25.24.12";
  std::string attack_target = "172.25.24.3";
  std::string attack_target_mac = "02:42:ac:19:18:03";
  std::string canary_addr = "192.0.2.1";  // reserved TEST-NET-1 address
  std::string exfil_domain = "updates.cdn-sync.net";
  std::string signal_target = "203.0.113.7";
  std::string web_exfil_host = "collect.web-metrics.io";
  std::string web_exfil_ip = "198.51.100.23";
};

namespace detail {

/// 5-50 ms between consecutive events.
inline double next_ts(double& t, SeededRng& rng) {
  t += static_cast<double>(rng.range(5, 50)) / 1000.0;
  return t;
}

inline NetworkEvent basic_event(double ts, EventType type, std::string src, int sport,
                                std::string dst, int dport, Transport tr) {
  NetworkEvent e;
  e.timestamp = ts;
  e.type = type;
  e.src = std::move(src);
  e.dst = std::move(dst);
  e.sport = sport;
  e.dport = dport;
  e.transport = tr;
  return e;
}

/// One chat-completions round trip: DNS resolve, TCP+TLS setup, POST, 200.
/// Returns the endpoint used so a held response can be emitted later.
inline const ModelEndpoint& emit_tool_call(std::vector<NetworkEvent>& out, double& t,
                                           SeededRng& rng, const SynthProfile& profile,
                                           bool hold_response) {
  const ModelEndpoint& ep =
      profile.endpoints[rng.below(profile.endpoints.size())];
  const int eph = static_cast<int>(rng.range(49152, 65535));

  NetworkEvent dns_q = basic_event(next_ts(t, rng), EventType::DNS_Q, profile.client_ip, eph,
                                   profile.dns_server, 53, Transport::UDP);
  dns_q.attrs.set("qname", ep.qname);
  out.push_back(std::move(dns_q));

  NetworkEvent dns_a = basic_event(next_ts(t, rng), EventType::DNS_A, profile.dns_server, 53,
                                   profile.client_ip, eph, Transport::UDP);
  dns_a.attrs.set("answer_ip", ep.ip);
  out.push_back(std::move(dns_a));

  const int conn_port = static_cast<int>(rng.range(49152, 65535));
  NetworkEvent syn = basic_event(next_ts(t, rng), EventType::TCP_CONN, profile.client_ip,
                                 conn_port, ep.ip, 443, Transport::TCP);
  syn.attrs.set("tcp_flags", "S");
  out.push_back(std::move(syn));

  NetworkEvent tls = basic_event(next_ts(t, rng), EventType::TLS_CH, profile.client_ip, conn_port,
                                 ep.ip, 443, Transport::TCP);
  tls.attrs.set("sni", ep.qname);
  out.push_back(std::move(tls));

  NetworkEvent req = basic_event(next_ts(t, rng), EventType::HTTP_REQ, profile.client_ip, 0,
                                 ep.ip, 443, Transport::TCP);
  req.attrs.set("method", "POST");
  req.attrs.set("host", ep.ip);
  req.attrs.set("path", "/v1/chat/completions");
  out.push_back(std::move(req));

  if (!hold_response) {
    NetworkEvent resp = basic_event(next_ts(t, rng), EventType::HTTP_RESP, ep.ip, 443,
                                    profile.client_ip, 0, Transport::TCP);
    resp.attrs.set("status", "200");
    resp.attrs.set("duration_ms", format_real(200.0 + rng.unit() * 1800.0));
    out.push_back(std::move(resp));
  }
  return ep;
}

inline void emit_held_response(std::vector<NetworkEvent>& out, double& t, SeededRng& rng,
                               const SynthProfile& profile, const ModelEndpoint& ep) {
  NetworkEvent resp = basic_event(next_ts(t, rng), EventType::HTTP_RESP, ep.ip, 443,
                                  profile.client_ip, 0, Transport::TCP);
  resp.attrs.set("status", "200");
  resp.attrs.set("duration_ms", format_real(200.0 + rng.unit() * 1800.0));
  out.push_back(std::move(resp));
}

inline void emit_canary(std::vector<NetworkEvent>& out, double& t, SeededRng& rng,
                        const SynthProfile& profile) {
  NetworkEvent req = basic_event(next_ts(t, rng), EventType::ICMP_ECHO_REQ, profile.attack_src, 0,
                                 profile.canary_addr, 0, Transport::ICMP);
  req.attrs.set("payload_len", "56");
  out.push_back(std::move(req));
  NetworkEvent reply = basic_event(next_ts(t, rng), EventType::ICMP_ECHO_REPLY,
                                   profile.canary_addr, 0, profile.attack_src, 0, Transport::ICMP);
  reply.attrs.set("payload_len", "56");
  out.push_back(std::move(reply));
}

inline constexpr char kEncodedAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

/// A base64-looking label long and mixed enough to clear the shipped entropy
/// threshold with margin; regenerates on the rare low-entropy draw.
inline std::string encoded_label(SeededRng& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    const int len = static_cast<int>(rng.range(20, 28));
    std::string label;
    label.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
      label.push_back(kEncodedAlphabet[rng.below(sizeof(kEncodedAlphabet) - 1)]);
    }
    if (detail::text_entropy_bits(label) >= 4.0) return label;
  }
  return "aGVsbG8td29ybGQtZXhmaWw";  // unreachable fallback, still above threshold
}

using BurstGenerator = std::function<void(std::vector<NetworkEvent>&, double&, SeededRng&,
                                          const SynthProfile&, int intensity)>;

inline const std::map<std::string, BurstGenerator>& burst_registry() {
  static const std::map<std::string, BurstGenerator> registry = {
      {"Network_Device_Configuration_Dump",
       [](std::vector<NetworkEvent>& out, double& t, SeededRng& rng, const SynthProfile& p,
          int intensity) {
         for (int i = 0; i < intensity; ++i) {
           const int query_port = static_cast<int>(rng.range(49152, 65535));
           NetworkEvent req = basic_event(next_ts(t, rng), EventType::SNMP_REQ, p.attack_src,
                                          query_port, p.attack_target, 161, Transport::UDP);
           req.attrs.set("payload_len", std::to_string(rng.range(60, 90)));
           out.push_back(std::move(req));
           NetworkEvent resp = basic_event(next_ts(t, rng), EventType::SNMP_RESP, p.attack_target,
                                           161, p.attack_src, query_port, Transport::UDP);
           resp.attrs.set("payload_len", std::to_string(rng.range(120, 480)));
           out.push_back(std::move(resp));
         }
         if (intensity > 0) {
           NetworkEvent arp_q = basic_event(next_ts(t, rng), EventType::ARP_REQ, p.attack_src, 0,
                                            p.attack_target, 0, Transport::ARP);
           arp_q.attrs.set("arp_target_ip", p.attack_target);
           out.push_back(std::move(arp_q));
           NetworkEvent arp_r = basic_event(next_ts(t, rng), EventType::ARP_REPLY,
                                            p.attack_target, 0, p.attack_src, 0, Transport::ARP);
           arp_r.attrs.set("arp_sender_ip", p.attack_target);
           arp_r.attrs.set("arp_sender_mac", p.attack_target_mac);
           out.push_back(std::move(arp_r));
         }
       }},
      {"Standard_Encoding",
       [](std::vector<NetworkEvent>& out, double& t, SeededRng& rng, const SynthProfile& p,
          int intensity) {
         for (int i = 0; i < intensity; ++i) {
           NetworkEvent q = basic_event(next_ts(t, rng), EventType::DNS_Q, p.attack_src,
                                        static_cast<int>(rng.range(49152, 65535)), p.dns_server,
                                        53, Transport::UDP);
           q.attrs.set("qname", encoded_label(rng) + "." + p.exfil_domain);
           out.push_back(std::move(q));
         }
       }},
      {"Traffic_Signaling",
       [](std::vector<NetworkEvent>& out, double& t, SeededRng& rng, const SynthProfile& p,
          int intensity) {
         const std::string payload_len = std::to_string(rng.range(32, 128));
         for (int i = 0; i < intensity; ++i) {
           NetworkEvent req = basic_event(next_ts(t, rng), EventType::ICMP_ECHO_REQ, p.attack_src,
                                          0, p.signal_target, 0, Transport::ICMP);
           req.attrs.set("payload_len", payload_len);
           out.push_back(std::move(req));
           NetworkEvent reply = basic_event(next_ts(t, rng), EventType::ICMP_ECHO_REPLY,
                                            p.signal_target, 0, p.attack_src, 0, Transport::ICMP);
           reply.attrs.set("payload_len", payload_len);
           out.push_back(std::move(reply));
         }
       }},
      {"Web_Protocols",
       [](std::vector<NetworkEvent>& out, double& t, SeededRng& rng, const SynthProfile& p,
          int intensity) {
         for (int i = 0; i < intensity; ++i) {
           NetworkEvent req = basic_event(next_ts(t, rng), EventType::HTTP_REQ, p.attack_src, 0,
                                          p.web_exfil_ip, 443, Transport::TCP);
           req.attrs.set("method", "POST");
           req.attrs.set("host", p.web_exfil_host);
           req.attrs.set("path", "/ingest/" + std::to_string(i));
           out.push_back(std::move(req));
           NetworkEvent resp = basic_event(next_ts(t, rng), EventType::HTTP_RESP, p.web_exfil_ip,
                                           443, p.attack_src, 0, Transport::TCP);
           resp.attrs.set("status", "200");
           out.push_back(std::move(resp));
         }
       }},
  };
  return registry;
}

}  // namespace detail

inline std::vector<std::string> registered_techniques() {
  std::vector<std::string> names;
  for (const auto& [name, gen] : detail::burst_registry()) names.push_back(name);
  return names;
}

/// Benign session: per tool call a DNS resolve, connection setup, and one
/// chat-completions round trip. Identical seeds give identical traces.
inline EventTrace synth_benign(std::uint64_t seed, const SynthProfile& profile = {}) {
  SeededRng rng(seed * 0x9E3779B97F4A7C15ULL + 1);
  std::vector<NetworkEvent> events;
  double t = profile.base_timestamp;
  for (int call = 0; call < profile.n_tool_calls; ++call) {
    detail::emit_tool_call(events, t, rng, profile, /*hold_response=*/false);
  }
  return make_trace(std::move(events), "benign_" + std::to_string(seed), TraceOrigin::Synthetic);
}

/// Malicious session: a benign envelope whose tool execution window carries
/// the technique's signature burst, ending with the canary echo pair.
inline EventTrace synth_technique(const std::string& technique, std::uint64_t seed, int intensity,
                                  const SynthProfile& profile = {}) {
  const auto& registry = detail::burst_registry();
  const auto it = registry.find(technique);
  if (it == registry.end()) throw UnknownTechnique("no generator template for: " + technique);

  SeededRng rng(seed * 0x9E3779B97F4A7C15ULL + 2);
  std::vector<NetworkEvent> events;
  double t = profile.base_timestamp;

  // benign envelope, response held until the burst finishes
  const ModelEndpoint& ep = detail::emit_tool_call(events, t, rng, profile, /*hold_response=*/true);
  it->second(events, t, rng, profile, intensity);
  detail::emit_held_response(events, t, rng, profile, ep);
  detail::emit_canary(events, t, rng, profile);

  return make_trace(std::move(events), technique + "_" + std::to_string(seed),
                    TraceOrigin::Synthetic);
}

/// True iff the trace carries an ICMP echo request to the canary address.
inline bool verify_attack_activation(const EventTrace& trace, const std::string& canary_addr) {
  for (const auto& e : trace.events) {
    if (e.type == EventType::ICMP_ECHO_REQ && e.dst == canary_addr) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

struct CorpusTechniqueSpec {
  std::string name;
  int count = 1;
  int intensity = 20;
};

struct CorpusSpec {
  int benign_count = 100;
  int benign_tool_calls = 1;
  std::vector<CorpusTechniqueSpec> techniques;
  std::uint64_t base_seed = 1;
  SynthProfile profile{};

  static CorpusSpec from_json(const nlohmann::json& j) {
    CorpusSpec spec;
    spec.benign_count = j.value("benign_count", 100);
    spec.benign_tool_calls = j.value("benign_tool_calls", 1);
    spec.base_seed = j.value("base_seed", static_cast<std::uint64_t>(1));
    if (j.contains("techniques")) {
      for (const auto& t : j.at("techniques")) {
        CorpusTechniqueSpec ts;
        ts.name = t.at("name").get<std::string>();
        ts.count = t.value("count", 1);
        ts.intensity = t.value("intensity", 20);
        spec.techniques.push_back(std::move(ts));
      }
    }
    return spec;
  }

  static CorpusSpec load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SynthError("cannot open corpus spec: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

struct CorpusEntry {
  std::string file;  // relative to the corpus directory
  std::string label;
  std::uint64_t seed = 0;
  int intensity = 0;
};

inline nlohmann::json manifest_to_json(const std::vector<CorpusEntry>& entries) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries) {
    arr.push_back({{"file", e.file}, {"label", e.label}, {"seed", e.seed},
                   {"intensity", e.intensity}});
  }
  return arr;
}

inline std::vector<CorpusEntry> manifest_from_json(const nlohmann::json& arr) {
  std::vector<CorpusEntry> entries;
  for (const auto& j : arr) {
    CorpusEntry e;
    e.file = j.at("file").get<std::string>();
    e.label = j.at("label").get<std::string>();
    e.seed = j.value("seed", static_cast<std::uint64_t>(0));
    e.intensity = j.value("intensity", 0);
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<CorpusEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SynthError("cannot open manifest: " + path);
  nlohmann::json j;
  in >> j;
  return manifest_from_json(j);
}

namespace detail {

inline std::string corpus_file_name(const std::string& label, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return label + "_" + buf + ".jsonl";
}

}  // namespace detail

/// Writes one trace file per corpus entry plus manifest.json mapping each
/// file to its label, seed, and intensity.
inline std::vector<CorpusEntry> synth_corpus(const CorpusSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::vector<CorpusEntry> entries;
  SynthProfile benign_profile = spec.profile;
  benign_profile.n_tool_calls = spec.benign_tool_calls;

  for (int i = 0; i < spec.benign_count; ++i) {
    CorpusEntry e;
    e.label = std::string(kBenignLabel);
    e.seed = spec.base_seed + static_cast<std::uint64_t>(i);
    e.intensity = 0;
    e.file = detail::corpus_file_name(e.label, i);
    EventTrace trace = synth_benign(e.seed, benign_profile);
    trace.session_id = fs::path(e.file).stem().string();
    write_trace_file((fs::path(out_dir) / e.file).string(), trace);
    entries.push_back(std::move(e));
  }
  for (const auto& tech : spec.techniques) {
    for (int i = 0; i < tech.count; ++i) {
      CorpusEntry e;
      e.label = tech.name;
      e.seed = spec.base_seed + static_cast<std::uint64_t>(i);
      e.intensity = tech.intensity;
      e.file = detail::corpus_file_name(e.label, i);
      EventTrace trace = synth_technique(tech.name, e.seed, tech.intensity, spec.profile);
      trace.session_id = fs::path(e.file).stem().string();
      write_trace_file((fs::path(out_dir) / e.file).string(), trace);
      entries.push_back(std::move(e));
    }
  }

  std::ofstream manifest(fs::path(out_dir) / "manifest.json");
  if (!manifest) throw SynthError("cannot write manifest in " + out_dir);
  manifest << manifest_to_json(entries).dump(2) << '\n';
  return entries;
}

}  // namespace netwarden
