#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "netwarden/catalog.hpp"
#include "netwarden/events.hpp"

namespace netwarden {

class DetectError : public Error {
 public:
  using Error::Error;
};

/// The remote backend could not produce any answer. Distinct from an invalid
/// prediction, which is an answer that names no catalog technique.
class BackendUnavailable : public DetectError {
 public:
  using DetectError::DetectError;
};

class EmptyInput : public DetectError {
 public:
  using DetectError::DetectError;
};

class InvalidMember : public DetectError {
 public:
  using DetectError::DetectError;
};

/// One signature rule: a technique plus the predicate parameters that fire it.
struct SignatureRule {
  std::string technique;
  SignatureParams params;
};

/// Rules in catalog order; techniques without signatures contribute no rule.
inline std::vector<SignatureRule> rules_from_catalog(const TechniqueCatalog& catalog) {
  std::vector<SignatureRule> rules;
  for (const auto& t : catalog.techniques()) {
    if (t.signature) rules.push_back({t.name, *t.signature});
  }
  return rules;
}

namespace detail {

/// Shannon entropy in bits per character over byte frequencies.
inline double text_entropy_bits(std::string_view s) {
  if (s.empty()) return 0.0;
  std::array<int, 256> counts{};
  for (unsigned char c : s) counts[c]++;
  const double n = static_cast<double>(s.size());
  double h = 0.0;
  for (int c : counts) {
    if (c == 0) continue;
    const double p = c / n;
    h -= p * std::log2(p);
  }
  return h;
}

inline std::string_view first_qname_label(std::string_view qname) {
  const std::size_t dot = qname.find('.');
  return dot == std::string_view::npos ? qname : qname.substr(0, dot);
}

inline bool host_in_allowlist(std::string_view host, const std::vector<std::string>& allowlist) {
  for (const auto& allowed : allowlist) {
    if (host == allowed) return true;
    // allowlist entries double as domain suffixes
    if (host.size() > allowed.size() && host.ends_with(allowed) &&
        host[host.size() - allowed.size() - 1] == '.') {
      return true;
    }
  }
  return false;
}

/// Heuristic for base64-like URL path segments carrying encoded payloads.
inline bool path_looks_encoded(std::string_view path, double entropy_threshold) {
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    std::string_view seg = path.substr(start, end - start);
    // strip a query string from the last segment
    const std::size_t q = seg.find('?');
    if (q != std::string_view::npos) seg = seg.substr(0, q);
    if (seg.size() >= 16) {
      bool charset_ok = true;
      for (char c : seg) {
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                        (c >= '0' && c <= '9') || c == '+' || c == '/' || c == '=' || c == '-' ||
                        c == '_';
        if (!ok) {
          charset_ok = false;
          break;
        }
      }
      if (charset_ok && text_entropy_bits(seg) >= entropy_threshold) return true;
    }
    start = end + 1;
  }
  return false;
}

inline bool event_matches_rule(const NetworkEvent& e, const SignatureRule& rule) {
  const SignatureParams& p = rule.params;
  if (e.type != p.event_type) return false;
  if (p.dport && e.dport != *p.dport) return false;
  if (p.qname_min_label_len || p.qname_entropy_threshold) {
    const std::string* qname = e.attrs.find("qname");
    if (qname == nullptr) return false;
    const std::string_view label = first_qname_label(*qname);
    if (p.qname_min_label_len && static_cast<int>(label.size()) < *p.qname_min_label_len)
      return false;
    if (p.qname_entropy_threshold && text_entropy_bits(label) < *p.qname_entropy_threshold)
      return false;
  }
  if (p.host_allowlist) {
    const std::string* method = e.attrs.find("method");
    if (method == nullptr || *method != "POST") return false;
    const std::string* host = e.attrs.find("host");
    const std::string_view effective_host = host != nullptr ? *host : std::string_view(e.dst);
    if (host_in_allowlist(effective_host, *p.host_allowlist)) return false;
  }
  if (p.encoded_path_pattern) {
    const std::string* path = e.attrs.find("path");
    if (path == nullptr) return false;
    if (!path_looks_encoded(*path, p.qname_entropy_threshold.value_or(3.0))) return false;
  }
  return true;
}

inline bool rule_fires(const EventTrace& trace, const SignatureRule& rule) {
  if (rule.params.payload_size_uniform.value_or(false)) {
    // count the largest group of matching events with one (dst, payload_len)
    std::map<std::pair<std::string, std::string>, int> groups;
    int best = 0;
    for (const auto& e : trace.events) {
      if (!event_matches_rule(e, rule)) continue;
      const std::string* plen = e.attrs.find("payload_len");
      auto& count = groups[{e.dst, plen != nullptr ? *plen : std::string()}];
      best = std::max(best, ++count);
    }
    return best >= rule.params.min_count;
  }
  int count = 0;
  for (const auto& e : trace.events) {
    if (event_matches_rule(e, rule)) {
      if (++count >= rule.params.min_count) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Evaluates rules over the full trace in order; the first match wins, and a
/// trace matching no rule is benign.
inline Verdict rule_detect(const EventTrace& trace, const std::vector<SignatureRule>& rules) {
  for (const auto& rule : rules) {
    if (detail::rule_fires(trace, rule)) {
      return make_technique_verdict(rule.technique, trace.session_id, rule.technique);
    }
  }
  return make_benign_verdict(trace.session_id, std::string(kBenignLabel));
}

/// Maps free-form detector output onto {benign} ∪ catalog ∪ {invalid}.
/// Whitespace, quotes and trailing punctuation are trimmed; the comparison is
/// case-insensitive with spaces folded to underscores. A non-exact answer is
/// accepted only when it matches a unique catalog name by containment.
inline std::string normalize_label(std::string_view raw, const TechniqueCatalog& catalog) {
  std::string_view s = raw;
  const auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  const auto is_quote = [](char c) { return c == '"' || c == '\'' || c == '`'; };
  const auto is_punct = [](char c) {
    return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?';
  };
  for (bool progress = true; progress && !s.empty();) {
    progress = false;
    while (!s.empty() && is_ws(s.front())) s.remove_prefix(1), progress = true;
    while (!s.empty() && is_ws(s.back())) s.remove_suffix(1), progress = true;
    while (!s.empty() && is_quote(s.front())) s.remove_prefix(1), progress = true;
    while (!s.empty() && (is_quote(s.back()) || is_punct(s.back()))) s.remove_suffix(1), progress = true;
  }

  const auto canon = [](std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
      if (c == ' ') {
        out.push_back('_');
      } else {
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      }
    }
    return out;
  };

  const std::string folded = canon(s);
  if (folded.empty()) return std::string(kInvalidLabel);
  if (folded == kBenignLabel) return std::string(kBenignLabel);

  for (const auto& t : catalog.techniques()) {
    if (canon(t.name) == folded) return t.name;
  }

  const Technique* unique_match = nullptr;
  for (const auto& t : catalog.techniques()) {
    const std::string name = canon(t.name);
    if (name.find(folded) != std::string::npos || folded.find(name) != std::string::npos) {
      if (unique_match != nullptr) return std::string(kInvalidLabel);  // ambiguous
      unique_match = &t;
    }
  }
  return unique_match != nullptr ? unique_match->name : std::string(kInvalidLabel);
}

/// A tool is malicious if any of its traces is: benign iff every member is
/// benign, otherwise the earliest malicious member decides (and is returned).
inline Verdict aggregate_tool_verdict(const std::vector<Verdict>& verdicts) {
  if (verdicts.empty()) throw EmptyInput("aggregate_tool_verdict over an empty sequence");
  for (const auto& v : verdicts) {
    if (!v.valid) throw InvalidMember("aggregate_tool_verdict with invalid member: " + v.label);
  }
  for (const auto& v : verdicts) {
    if (is_malicious(v)) return v;
  }
  return verdicts.front();
}

/// Uniform detector contract shared by the rule and remote backends.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual Verdict detect(const EventTrace& trace, const TechniqueCatalog& catalog) const = 0;
};

/// Deterministic signature backend; a pure function of (trace, catalog).
class RuleDetector final : public Detector {
 public:
  Verdict detect(const EventTrace& trace, const TechniqueCatalog& catalog) const override {
    if (catalog.empty()) throw DetectError("detect with an empty catalog");
    return rule_detect(trace, rules_from_catalog(catalog));
  }
};

}  // namespace netwarden
