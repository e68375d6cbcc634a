#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace netwarden {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Event vocabulary
// ---------------------------------------------------------------------------

/// Closed vocabulary of network event types. Unknown decodings map to OTHER,
/// never to a new name.
enum class EventType {
  DNS_Q,
  DNS_A,
  TLS_CH,
  HTTP_REQ,
  HTTP_RESP,
  ICMP_ECHO_REQ,
  ICMP_ECHO_REPLY,
  ICMP_OTHER,
  ARP_REQ,
  ARP_REPLY,
  SNMP_REQ,
  SNMP_RESP,
  SMTP_CONN,
  FTP_CONN,
  SSH_CONN,
  SMB_CONN,
  RDP_CONN,
  DB_CONN,
  TCP_CONN,
  UDP_DGRAM,
  OTHER,
};

enum class EventCategory { Resolution, Transport, Application, Signaling, Link, Service };

enum class Transport { TCP, UDP, ICMP, ARP, NONE };

inline constexpr std::array<EventType, 21> kAllEventTypes = {
    EventType::DNS_Q,         EventType::DNS_A,      EventType::TLS_CH,
    EventType::HTTP_REQ,      EventType::HTTP_RESP,  EventType::ICMP_ECHO_REQ,
    EventType::ICMP_ECHO_REPLY, EventType::ICMP_OTHER, EventType::ARP_REQ,
    EventType::ARP_REPLY,     EventType::SNMP_REQ,   EventType::SNMP_RESP,
    EventType::SMTP_CONN,     EventType::FTP_CONN,   EventType::SSH_CONN,
    EventType::SMB_CONN,      EventType::RDP_CONN,   EventType::DB_CONN,
    EventType::TCP_CONN,      EventType::UDP_DGRAM,  EventType::OTHER,
};

inline constexpr std::string_view to_string(EventType t) {
  switch (t) {
    case EventType::DNS_Q: return "DNS_Q";
    case EventType::DNS_A: return "DNS_A";
    case EventType::TLS_CH: return "TLS_CH";
    case EventType::HTTP_REQ: return "HTTP_REQ";
    case EventType::HTTP_RESP: return "HTTP_RESP";
    case EventType::ICMP_ECHO_REQ: return "ICMP_ECHO_REQ";
    case EventType::ICMP_ECHO_REPLY: return "ICMP_ECHO_REPLY";
    case EventType::ICMP_OTHER: return "ICMP_OTHER";
    case EventType::ARP_REQ: return "ARP_REQ";
    case EventType::ARP_REPLY: return "ARP_REPLY";
    case EventType::SNMP_REQ: return "SNMP_REQ";
    case EventType::SNMP_RESP: return "SNMP_RESP";
    case EventType::SMTP_CONN: return "SMTP_CONN";
    case EventType::FTP_CONN: return "FTP_CONN";
    case EventType::SSH_CONN: return "SSH_CONN";
    case EventType::SMB_CONN: return "SMB_CONN";
    case EventType::RDP_CONN: return "RDP_CONN";
    case EventType::DB_CONN: return "DB_CONN";
    case EventType::TCP_CONN: return "TCP_CONN";
    case EventType::UDP_DGRAM: return "UDP_DGRAM";
    case EventType::OTHER: return "OTHER";
  }
  return "OTHER";
}

inline std::optional<EventType> event_type_from_string(std::string_view name) {
  for (EventType t : kAllEventTypes) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

inline constexpr std::string_view to_string(Transport t) {
  switch (t) {
    case Transport::TCP: return "TCP";
    case Transport::UDP: return "UDP";
    case Transport::ICMP: return "ICMP";
    case Transport::ARP: return "ARP";
    case Transport::NONE: return "NONE";
  }
  return "NONE";
}

inline std::optional<Transport> transport_from_string(std::string_view name) {
  if (name == "TCP") return Transport::TCP;
  if (name == "UDP") return Transport::UDP;
  if (name == "ICMP") return Transport::ICMP;
  if (name == "ARP") return Transport::ARP;
  if (name == "NONE") return Transport::NONE;
  return std::nullopt;
}

inline constexpr EventCategory category(EventType t) {
  switch (t) {
    case EventType::DNS_Q:
    case EventType::DNS_A:
      return EventCategory::Resolution;
    case EventType::HTTP_REQ:
    case EventType::HTTP_RESP:
      return EventCategory::Application;
    case EventType::ICMP_ECHO_REQ:
    case EventType::ICMP_ECHO_REPLY:
    case EventType::ICMP_OTHER:
      return EventCategory::Signaling;
    case EventType::ARP_REQ:
    case EventType::ARP_REPLY:
      return EventCategory::Link;
    case EventType::SNMP_REQ:
    case EventType::SNMP_RESP:
    case EventType::SMTP_CONN:
    case EventType::FTP_CONN:
    case EventType::SSH_CONN:
    case EventType::SMB_CONN:
    case EventType::RDP_CONN:
    case EventType::DB_CONN:
      return EventCategory::Service;
    case EventType::TLS_CH:
    case EventType::TCP_CONN:
    case EventType::UDP_DGRAM:
    case EventType::OTHER:
      return EventCategory::Transport;
  }
  return EventCategory::Transport;
}

/// Transports an event type may legally carry.
inline bool transport_allowed(EventType t, Transport tr) {
  switch (t) {
    case EventType::DNS_Q:
    case EventType::DNS_A:
      return tr == Transport::UDP || tr == Transport::TCP;
    case EventType::TLS_CH:
    case EventType::HTTP_REQ:
    case EventType::HTTP_RESP:
    case EventType::SMTP_CONN:
    case EventType::FTP_CONN:
    case EventType::SSH_CONN:
    case EventType::SMB_CONN:
    case EventType::RDP_CONN:
    case EventType::DB_CONN:
    case EventType::TCP_CONN:
      return tr == Transport::TCP;
    case EventType::ICMP_ECHO_REQ:
    case EventType::ICMP_ECHO_REPLY:
    case EventType::ICMP_OTHER:
      return tr == Transport::ICMP;
    case EventType::ARP_REQ:
    case EventType::ARP_REPLY:
      return tr == Transport::ARP;
    case EventType::SNMP_REQ:
    case EventType::SNMP_RESP:
    case EventType::UDP_DGRAM:
      return tr == Transport::UDP;
    case EventType::OTHER:
      return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Attribute map
// ---------------------------------------------------------------------------

/// Keys with a fixed iteration rank. Unrecognized keys follow, ordered
/// lexicographically, so serialization stays deterministic.
inline constexpr std::array<std::string_view, 14> kRecognizedAttrKeys = {
    "qname",   "answer_ip", "sni",  "method",    "host",
    "path",    "status",    "pkt_len", "payload_len", "tcp_flags",
    "ttl",     "icmp_type", "body_excerpt", "duration_ms",
};

/// Flat key -> text map with canonical iteration order.
class AttrMap {
 public:
  AttrMap() = default;

  /// Raw construction that keeps duplicate keys so validation can report them.
  static AttrMap from_pairs(std::vector<std::pair<std::string, std::string>> pairs) {
    AttrMap m;
    m.items_ = std::move(pairs);
    std::stable_sort(m.items_.begin(), m.items_.end(),
                     [](const auto& a, const auto& b) { return key_less(a.first, b.first); });
    return m;
  }

  /// Inserts or overwrites, keeping canonical order.
  void set(std::string_view key, std::string_view value) {
    for (auto& kv : items_) {
      if (kv.first == key) {
        kv.second = std::string(value);
        return;
      }
    }
    auto it = std::upper_bound(items_.begin(), items_.end(), key,
                               [](std::string_view k, const auto& kv) { return key_less(k, kv.first); });
    items_.insert(it, {std::string(key), std::string(value)});
  }

  const std::string* find(std::string_view key) const {
    for (const auto& kv : items_) {
      if (kv.first == key) return &kv.second;
    }
    return nullptr;
  }

  bool contains(std::string_view key) const { return find(key) != nullptr; }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }

  /// Items in canonical order.
  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

  std::optional<std::string> first_duplicate_key() const {
    for (std::size_t i = 1; i < items_.size(); ++i) {
      if (items_[i].first == items_[i - 1].first) return items_[i].first;
    }
    return std::nullopt;
  }

  bool operator==(const AttrMap&) const = default;

 private:
  static int key_rank(std::string_view key) {
    for (std::size_t i = 0; i < kRecognizedAttrKeys.size(); ++i) {
      if (kRecognizedAttrKeys[i] == key) return static_cast<int>(i);
    }
    return static_cast<int>(kRecognizedAttrKeys.size());
  }

  static bool key_less(std::string_view a, std::string_view b) {
    const int ra = key_rank(a);
    const int rb = key_rank(b);
    if (ra != rb) return ra < rb;
    if (ra == static_cast<int>(kRecognizedAttrKeys.size())) return a < b;
    return false;  // same recognized key
  }

  std::vector<std::pair<std::string, std::string>> items_;
};

// ---------------------------------------------------------------------------
// Core records
// ---------------------------------------------------------------------------

/// One observed network action. Timestamps are epoch seconds with microsecond
/// resolution; sport 0 means unknown / not applicable.
struct NetworkEvent {
  double timestamp = 0.0;
  EventType type = EventType::OTHER;
  std::string src;
  std::string dst;
  int sport = 0;
  int dport = 0;
  Transport transport = Transport::NONE;
  AttrMap attrs;

  bool operator==(const NetworkEvent&) const = default;
};

enum class Direction { Request, Response };

/// One application-layer request or response captured by the MITM proxy.
struct DecryptedRecord {
  double timestamp = 0.0;
  Direction direction = Direction::Request;
  std::string method;        // requests only
  std::string host;
  std::string path;          // requests only
  std::optional<int> status; // responses only, 100-599
  std::string body_excerpt;  // truncated to the configured byte cap
  std::optional<double> duration_ms;  // responses only
  std::string client;
  std::string server;
  int server_port = 0;

  bool operator==(const DecryptedRecord&) const = default;
};

enum class TraceOrigin { PcapOnly, Merged, Synthetic };

inline constexpr std::string_view to_string(TraceOrigin o) {
  switch (o) {
    case TraceOrigin::PcapOnly: return "pcap_only";
    case TraceOrigin::Merged: return "merged";
    case TraceOrigin::Synthetic: return "synthetic";
  }
  return "pcap_only";
}

inline std::optional<TraceOrigin> origin_from_string(std::string_view s) {
  if (s == "pcap_only") return TraceOrigin::PcapOnly;
  if (s == "merged") return TraceOrigin::Merged;
  if (s == "synthetic") return TraceOrigin::Synthetic;
  return std::nullopt;
}

/// Ordered sequence of events for one tool invocation or streaming session.
/// Events are sorted by (timestamp, insertion rank); the rank is the position
/// at construction time, so equal timestamps keep their original order.
struct EventTrace {
  std::vector<NetworkEvent> events;
  std::string session_id;
  TraceOrigin origin = TraceOrigin::PcapOnly;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
};

/// Orders by timestamp; equal timestamps order by insertion rank.
/// Returns <0, 0, >0 like strcmp.
inline int compare_events(const NetworkEvent& a, std::size_t rank_a,
                          const NetworkEvent& b, std::size_t rank_b) {
  if (a.timestamp < b.timestamp) return -1;
  if (a.timestamp > b.timestamp) return 1;
  if (rank_a < rank_b) return -1;
  if (rank_a > rank_b) return 1;
  return 0;
}

/// Builds a trace from events in insertion order, establishing the ordering
/// invariant via a stable sort on timestamp.
inline EventTrace make_trace(std::vector<NetworkEvent> events, std::string session_id,
                             TraceOrigin origin) {
  std::stable_sort(events.begin(), events.end(),
                   [](const NetworkEvent& a, const NetworkEvent& b) {
                     return a.timestamp < b.timestamp;
                   });
  return EventTrace{std::move(events), std::move(session_id), origin};
}

inline bool is_time_ordered(const EventTrace& trace) {
  for (std::size_t i = 1; i < trace.events.size(); ++i) {
    if (trace.events[i].timestamp < trace.events[i - 1].timestamp) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ValidationErrorKind {
  InvalidPort,
  TypeTransportMismatch,
  DuplicateAttrKey,
  NegativeTimestamp,
};

struct ValidationError {
  ValidationErrorKind kind;
  std::string message;
};

/// Checks every NetworkEvent invariant; nullopt means the event is valid.
inline std::optional<ValidationError> validate_event(const NetworkEvent& e) {
  if (e.timestamp < 0.0) {
    return ValidationError{ValidationErrorKind::NegativeTimestamp, "timestamp is negative"};
  }
  if (e.sport < 0 || e.sport > 65535) {
    return ValidationError{ValidationErrorKind::InvalidPort,
                           "sport out of range: " + std::to_string(e.sport)};
  }
  if (e.dport < 0 || e.dport > 65535) {
    return ValidationError{ValidationErrorKind::InvalidPort,
                           "dport out of range: " + std::to_string(e.dport)};
  }
  if (!transport_allowed(e.type, e.transport)) {
    return ValidationError{ValidationErrorKind::TypeTransportMismatch,
                           std::string(to_string(e.type)) + " cannot carry transport " +
                               std::string(to_string(e.transport))};
  }
  if (auto dup = e.attrs.first_duplicate_key()) {
    return ValidationError{ValidationErrorKind::DuplicateAttrKey,
                           "duplicate attr key: " + *dup};
  }
  return std::nullopt;
}

/// Record invariants: requests carry a method and no status, responses carry a
/// status in 100-599.
inline std::optional<std::string> validate_record(const DecryptedRecord& r) {
  if (r.timestamp < 0.0) return "timestamp is negative";
  if (r.direction == Direction::Request) {
    if (r.method.empty()) return "request record without method";
    if (r.status.has_value()) return "request record with status";
  } else {
    if (!r.status.has_value()) return "response record without status";
    if (*r.status < 100 || *r.status > 599) {
      return "status out of range: " + std::to_string(*r.status);
    }
    if (r.duration_ms.has_value() && *r.duration_ms < 0.0) return "negative duration_ms";
  }
  if (r.server_port < 0 || r.server_port > 65535) {
    return "server_port out of range: " + std::to_string(r.server_port);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

inline constexpr std::string_view kBenignLabel = "benign";
inline constexpr std::string_view kInvalidLabel = "invalid";

/// Detector output: benign, a catalog technique name, or invalid.
struct Verdict {
  std::string label{kBenignLabel};
  std::string raw_output;
  std::string trace_ref;
  std::optional<std::pair<std::int64_t, std::int64_t>> window_ref;
  bool valid = true;

  bool operator==(const Verdict&) const = default;
};

inline Verdict make_benign_verdict(std::string trace_ref, std::string raw = {}) {
  return Verdict{std::string(kBenignLabel), std::move(raw), std::move(trace_ref), std::nullopt, true};
}

inline Verdict make_technique_verdict(std::string technique, std::string trace_ref,
                                      std::string raw = {}) {
  return Verdict{std::move(technique), std::move(raw), std::move(trace_ref), std::nullopt, true};
}

inline Verdict make_invalid_verdict(std::string raw, std::string trace_ref) {
  return Verdict{std::string(kInvalidLabel), std::move(raw), std::move(trace_ref), std::nullopt, false};
}

inline bool is_malicious(const Verdict& v) {
  return v.valid && v.label != kBenignLabel;
}

}  // namespace netwarden
