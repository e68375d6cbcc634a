#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "netwarden/catalog.hpp"
#include "netwarden/events.hpp"

namespace netwarden {

class SerializeError : public Error {
 public:
  using Error::Error;
};

class EmptyCatalog : public SerializeError {
 public:
  using SerializeError::SerializeError;
};

/// Default serialization budget, roughly a 32K-token context window.
inline constexpr std::size_t kDefaultSerializeBudget = 120000;

/// Fixed offset from UTC. Rendering never consults the host timezone
/// database, so output is identical across machines.
struct TimeZoneOffset {
  int minutes_east = 0;

  /// Accepts "UTC", "Z", "+HH:MM", "-HH:MM", "+HHMM", "-HHMM".
  static TimeZoneOffset parse(std::string_view text) {
    if (text.empty() || text == "UTC" || text == "utc" || text == "Z" || text == "z") {
      return TimeZoneOffset{0};
    }
    if ((text[0] == '+' || text[0] == '-') && text.size() >= 3) {
      const int sign = text[0] == '-' ? -1 : 1;
      std::string digits;
      for (std::size_t i = 1; i < text.size(); ++i) {
        if (text[i] == ':') continue;
        if (text[i] < '0' || text[i] > '9') {
          throw SerializeError("bad timezone offset: " + std::string(text));
        }
        digits.push_back(text[i]);
      }
      if (digits.size() != 4) throw SerializeError("bad timezone offset: " + std::string(text));
      const int hh = (digits[0] - '0') * 10 + (digits[1] - '0');
      const int mm = (digits[2] - '0') * 10 + (digits[3] - '0');
      if (hh > 14 || mm > 59) throw SerializeError("bad timezone offset: " + std::string(text));
      return TimeZoneOffset{sign * (hh * 60 + mm)};
    }
    throw SerializeError("bad timezone offset: " + std::string(text));
  }
};

namespace detail {

/// HH:MM:SS wall clock for an epoch timestamp under a fixed offset.
/// Sub-second digits are dropped; event indices preserve sub-second order.
inline std::string format_clock(double epoch_seconds, TimeZoneOffset tz) {
  const std::int64_t total = static_cast<std::int64_t>(std::floor(epoch_seconds)) +
                             static_cast<std::int64_t>(tz.minutes_east) * 60;
  std::int64_t sec_of_day = total % 86400;
  if (sec_of_day < 0) sec_of_day += 86400;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d:%02d:%02d", static_cast<int>(sec_of_day / 3600),
                static_cast<int>((sec_of_day / 60) % 60), static_cast<int>(sec_of_day % 60));
  return std::string(buf);
}

/// Renders a non-negative real with up to three decimals, trailing zeros
/// trimmed: 854.2 -> "854.2", 100.0 -> "100". Integer-only math, so the
/// output never depends on the process locale.
inline std::string format_real(double v) {
  const bool neg = v < 0;
  const double a = neg ? -v : v;
  std::int64_t milli = static_cast<std::int64_t>(std::llround(a * 1000.0));
  std::int64_t whole = milli / 1000;
  std::int64_t frac = milli % 1000;
  std::string out = neg ? "-" : "";
  out += std::to_string(whole);
  if (frac != 0) {
    char buf[4];
    std::snprintf(buf, sizeof(buf), "%03d", static_cast<int>(frac));
    std::string f(buf);
    while (!f.empty() && f.back() == '0') f.pop_back();
    out += '.';
    out += f;
  }
  return out;
}

inline int digit_count(std::size_t n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

/// Display names for a few attrs whose wire key differs from the rendered key.
inline std::string_view attr_display_name(std::string_view key) {
  if (key == "answer_ip") return "ip";
  if (key == "answer_ip2") return "ip2";
  if (key == "answer_ip3") return "ip3";
  return key;
}

inline bool is_arp_summary_key(std::string_view key) {
  return key == "arp_sender_ip" || key == "arp_sender_mac" || key == "arp_target_ip";
}

inline void append_attr_pairs(std::string& line, const NetworkEvent& e, bool skip_arp_keys) {
  for (const auto& [key, value] : e.attrs.items()) {
    if (skip_arp_keys && is_arp_summary_key(key)) continue;
    line += ' ';
    line += attr_display_name(key);
    line += '=';
    line += value;
  }
}

}  // namespace detail

/// Renders one event as a single line:
///   [NN] HH:MM:SS TYPE src:sport->dst:dport PROTO k=v k=v ...
/// ARP events carry a "who-has" / "is-at" summary instead of k=v pairs.
inline std::string serialize_event(const NetworkEvent& e, std::size_t index, int width,
                                   TimeZoneOffset tz = {}) {
  char head[16];
  std::snprintf(head, sizeof(head), "[%0*zu]", width, index);
  std::string line(head);
  line += ' ';
  line += detail::format_clock(e.timestamp, tz);
  line += ' ';
  line += to_string(e.type);
  line += ' ';
  line += e.src;
  line += ':';
  line += std::to_string(e.sport);
  line += "->";
  line += e.dst;
  line += ':';
  line += std::to_string(e.dport);
  line += ' ';
  line += to_string(e.transport);

  if (e.type == EventType::ARP_REQ) {
    if (const auto* target = e.attrs.find("arp_target_ip")) {
      line += " who-has ";
      line += *target;
    }
    detail::append_attr_pairs(line, e, /*skip_arp_keys=*/true);
  } else if (e.type == EventType::ARP_REPLY) {
    const auto* sender = e.attrs.find("arp_sender_ip");
    const auto* mac = e.attrs.find("arp_sender_mac");
    if (sender != nullptr && mac != nullptr) {
      line += ' ';
      line += *sender;
      line += " is-at ";
      line += *mac;
    }
    detail::append_attr_pairs(line, e, /*skip_arp_keys=*/true);
  } else {
    detail::append_attr_pairs(line, e, /*skip_arp_keys=*/false);
  }
  return line;
}

namespace detail {

inline std::string render_tail(const EventTrace& trace, std::size_t drop, TimeZoneOffset tz) {
  const std::size_t kept = trace.events.size() - drop;
  const int width = std::max(2, digit_count(kept == 0 ? 1 : kept));
  std::string out;
  if (drop > 0) {
    out += "[... " + std::to_string(drop) + " earlier events truncated]";
  }
  for (std::size_t i = 0; i < kept; ++i) {
    if (!out.empty() || i > 0) out += '\n';
    out += serialize_event(trace.events[drop + i], i + 1, width, tz);
  }
  // A single-line header with zero kept events needs no join fixup.
  return out;
}

}  // namespace detail

/// Joins event lines with newlines; indices run 1..T with width max(2,
/// digits(T)). If the text would exceed the budget, the oldest events are
/// dropped, survivors are re-indexed from [01], and a truncation header is
/// prepended.
inline std::string serialize_trace(const EventTrace& trace, TimeZoneOffset tz = {},
                                   std::size_t budget = kDefaultSerializeBudget) {
  if (trace.events.empty()) return std::string();

  std::string full = detail::render_tail(trace, 0, tz);
  if (full.size() <= budget) return full;

  // Dropping an event always shrinks the text by more than the header can
  // grow, so fits(drop) is monotone and a binary search applies.
  std::size_t lo = 1, hi = trace.events.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (detail::render_tail(trace, mid, tz).size() <= budget) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return detail::render_tail(trace, lo, tz);
}

/// Wraps a serialized trace in the fixed detection prompt. The catalog order
/// defines the bullet order; the trace text is embedded verbatim.
inline std::string build_prompt(const TechniqueCatalog& catalog, std::string_view context) {
  if (catalog.empty()) throw EmptyCatalog("cannot build a detection prompt from an empty catalog");
  std::string techniques_str;
  for (const auto& t : catalog.techniques()) {
    if (!techniques_str.empty()) techniques_str += '\n';
    techniques_str += "- ";
    techniques_str += t.name;
    techniques_str += ": ";
    techniques_str += t.description;
  }
  std::string prompt =
      "You are a cybersecurity analyst detecting specific attack techniques from network traffic "
      "patterns.\n\nTECHNIQUES:\n";
  prompt += techniques_str;
  prompt += "\n\nNETWORK TRAFFIC:\n";
  prompt += context;
  prompt +=
      "\n\nInstructions:\n1. Match the observed behavior to ONE specific technique from the list "
      "above.\n2. Only return the EXACT technique name from the list, or \"benign\" if no attack "
      "detected. Nothing else should be returned.\n";
  return prompt;
}

}  // namespace netwarden
