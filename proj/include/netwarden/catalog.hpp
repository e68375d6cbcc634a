#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "netwarden/events.hpp"

namespace netwarden {

class CatalogError : public Error {
 public:
  using Error::Error;
};

/// Predicate parameters for one signature rule. Which fields are set decides
/// what the rule counts; see rule_detect.
struct SignatureParams {
  int min_count = 1;
  EventType event_type = EventType::OTHER;
  std::optional<int> dport;
  std::optional<double> qname_entropy_threshold;  // bits per char
  std::optional<int> qname_min_label_len;
  std::optional<std::vector<std::string>> host_allowlist;
  std::optional<bool> payload_size_uniform;
  bool encoded_path_pattern = false;

  bool operator==(const SignatureParams&) const = default;
};

struct Technique {
  std::string name;         // underscore-separated words, unique within the catalog
  std::string mitre_id;
  std::string description;  // one sentence, used in the detection prompt
  std::optional<SignatureParams> signature;

  bool operator==(const Technique&) const = default;
};

namespace detail {

inline bool valid_technique_name(std::string_view name) {
  if (name.empty()) return false;
  bool prev_underscore = true;  // leading underscore not allowed
  for (char c : name) {
    if (c == '_') {
      if (prev_underscore) return false;
      prev_underscore = true;
    } else if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      prev_underscore = false;
    } else {
      return false;
    }
  }
  return !prev_underscore;
}

inline nlohmann::json signature_to_json(const SignatureParams& s) {
  nlohmann::json j;
  j["min_count"] = s.min_count;
  j["event_type"] = std::string(to_string(s.event_type));
  if (s.dport) j["dport"] = *s.dport;
  if (s.qname_entropy_threshold) j["qname_entropy_threshold"] = *s.qname_entropy_threshold;
  if (s.qname_min_label_len) j["qname_min_label_len"] = *s.qname_min_label_len;
  if (s.host_allowlist) j["host_allowlist"] = *s.host_allowlist;
  if (s.payload_size_uniform) j["payload_size_uniform"] = *s.payload_size_uniform;
  if (s.encoded_path_pattern) j["encoded_path_pattern"] = true;
  return j;
}

inline SignatureParams signature_from_json(const nlohmann::json& j) {
  SignatureParams s;
  s.min_count = j.value("min_count", 1);
  if (s.min_count < 1) throw CatalogError("signature min_count must be >= 1");
  const std::string type_name = j.value("event_type", std::string("OTHER"));
  auto t = event_type_from_string(type_name);
  if (!t) throw CatalogError("signature with unknown event_type: " + type_name);
  s.event_type = *t;
  if (j.contains("dport")) s.dport = j.at("dport").get<int>();
  if (j.contains("qname_entropy_threshold"))
    s.qname_entropy_threshold = j.at("qname_entropy_threshold").get<double>();
  if (j.contains("qname_min_label_len"))
    s.qname_min_label_len = j.at("qname_min_label_len").get<int>();
  if (j.contains("host_allowlist"))
    s.host_allowlist = j.at("host_allowlist").get<std::vector<std::string>>();
  if (j.contains("payload_size_uniform"))
    s.payload_size_uniform = j.at("payload_size_uniform").get<bool>();
  s.encoded_path_pattern = j.value("encoded_path_pattern", false);
  return s;
}

}  // namespace detail

/// The label set C: an ordered list of technique definitions. File order
/// defines the bullet order in detection prompts.
class TechniqueCatalog {
 public:
  TechniqueCatalog() = default;

  explicit TechniqueCatalog(std::vector<Technique> techniques) {
    for (auto& t : techniques) add(std::move(t));
  }

  void add(Technique t) {
    if (!detail::valid_technique_name(t.name)) {
      throw CatalogError("invalid technique name: '" + t.name + "'");
    }
    if (find(t.name) != nullptr) {
      throw CatalogError("duplicate technique name: " + t.name);
    }
    techniques_.push_back(std::move(t));
  }

  const Technique* find(std::string_view name) const {
    for (const auto& t : techniques_) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }

  const std::vector<Technique>& techniques() const { return techniques_; }
  std::size_t size() const { return techniques_.size(); }
  bool empty() const { return techniques_.empty(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(techniques_.size());
    for (const auto& t : techniques_) out.push_back(t.name);
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : techniques_) {
      nlohmann::json j;
      j["name"] = t.name;
      j["mitre_id"] = t.mitre_id;
      j["description"] = t.description;
      if (t.signature) j["signature"] = detail::signature_to_json(*t.signature);
      arr.push_back(std::move(j));
    }
    return arr;
  }

  static TechniqueCatalog from_json(const nlohmann::json& arr) {
    if (!arr.is_array()) throw CatalogError("catalog file must be a top-level JSON array");
    TechniqueCatalog cat;
    for (const auto& j : arr) {
      Technique t;
      t.name = j.value("name", std::string());
      t.mitre_id = j.value("mitre_id", std::string());
      t.description = j.value("description", std::string());
      if (j.contains("signature")) t.signature = detail::signature_from_json(j.at("signature"));
      cat.add(std::move(t));
    }
    return cat;
  }

  static TechniqueCatalog load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CatalogError("cannot open catalog file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CatalogError("catalog parse error in " + path + ": " + e.what());
    }
    return from_json(j);
  }

  void save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw CatalogError("cannot write catalog file: " + path);
    out << to_json().dump(2) << '\n';
  }

  /// The shipped default: the techniques with known network signatures plus
  /// their rule parameters. Operators extend this via the catalog file.
  static TechniqueCatalog builtin_default();

  bool operator==(const TechniqueCatalog& other) const { return techniques_ == other.techniques_; }

 private:
  std::vector<Technique> techniques_;
};

inline TechniqueCatalog TechniqueCatalog::builtin_default() {
  TechniqueCatalog cat;
  {
    Technique t;
    t.name = "Network_Device_Configuration_Dump";
    t.mitre_id = "T1602.002";
    t.description =
        "Repeated SNMP queries against an internal device to enumerate and dump its configuration.";
    SignatureParams s;
    s.min_count = 10;
    s.event_type = EventType::SNMP_REQ;
    s.dport = 161;
    t.signature = s;
    cat.add(std::move(t));
  }
  {
    Technique t;
    t.name = "Standard_Encoding";
    t.mitre_id = "T1132.001";
    t.description =
        "Data smuggled through standard encodings, typically long base64-like DNS labels carrying encoded payloads.";
    SignatureParams s;
    s.min_count = 3;
    s.event_type = EventType::DNS_Q;
    s.qname_min_label_len = 16;
    s.qname_entropy_threshold = 3.5;
    t.signature = s;
    cat.add(std::move(t));
  }
  {
    Technique t;
    t.name = "Traffic_Signaling";
    t.mitre_id = "T1205";
    t.description =
        "Covert signaling through uniform probe traffic, such as repeated same-size ICMP echoes to one host.";
    SignatureParams s;
    s.min_count = 5;
    s.event_type = EventType::ICMP_ECHO_REQ;
    s.payload_size_uniform = true;
    t.signature = s;
    cat.add(std::move(t));
  }
  {
    Technique t;
    t.name = "Web_Protocols";
    t.mitre_id = "T1071.001";
    t.description =
        "Exfiltration or command-and-control over ordinary web requests, seen as repeated POSTs to unexpected hosts.";
    SignatureParams s;
    s.min_count = 3;
    s.event_type = EventType::HTTP_REQ;
    s.host_allowlist = std::vector<std::string>{"api.example.com", "172.66.0.243"};
    t.signature = s;
    cat.add(std::move(t));
  }
  return cat;
}

}  // namespace netwarden
