#pragma once

#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "netwarden/events.hpp"
#include "netwarden/serialize.hpp"

namespace netwarden {

struct FlowParseIssue {
  std::size_t line_no = 0;  // 1-based
  std::string message;
};

struct FlowParseResult {
  std::vector<DecryptedRecord> records;  // file order
  std::vector<FlowParseIssue> issues;    // malformed lines, reported and skipped
};

namespace detail {

inline DecryptedRecord record_from_json(const nlohmann::json& j) {
  DecryptedRecord r;
  r.timestamp = j.at("ts").get<double>();
  const std::string dir = j.at("direction").get<std::string>();
  if (dir == "request") {
    r.direction = Direction::Request;
  } else if (dir == "response") {
    r.direction = Direction::Response;
  } else {
    throw Error("direction must be 'request' or 'response', got '" + dir + "'");
  }
  r.client = j.value("client", std::string());
  r.server = j.value("server", std::string());
  r.server_port = j.value("server_port", 0);
  r.method = j.value("method", std::string());
  r.host = j.value("host", std::string());
  r.path = j.value("path", std::string());
  if (j.contains("status")) r.status = j.at("status").get<int>();
  if (j.contains("duration_ms")) r.duration_ms = j.at("duration_ms").get<double>();
  r.body_excerpt = j.value("body_excerpt", std::string());
  return r;
}

inline nlohmann::json record_to_json(const DecryptedRecord& r) {
  nlohmann::json j;
  j["ts"] = r.timestamp;
  j["direction"] = r.direction == Direction::Request ? "request" : "response";
  j["client"] = r.client;
  j["server"] = r.server;
  j["server_port"] = r.server_port;
  if (r.direction == Direction::Request) {
    j["method"] = r.method;
    j["host"] = r.host;
    j["path"] = r.path;
  } else {
    j["status"] = r.status.value_or(0);
    if (r.duration_ms) j["duration_ms"] = *r.duration_ms;
  }
  if (!r.body_excerpt.empty()) j["body_excerpt"] = r.body_excerpt;
  return j;
}

}  // namespace detail

/// Parses a JSON-lines flow log into DecryptedRecords. Malformed lines are
/// reported in the result and skipped; an empty log is an empty result.
inline FlowParseResult parse_flow_log(std::istream& in) {
  FlowParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      DecryptedRecord r = detail::record_from_json(nlohmann::json::parse(line));
      if (auto problem = validate_record(r)) throw Error(*problem);
      result.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      result.issues.push_back({line_no, e.what()});
    }
  }
  return result;
}

inline FlowParseResult parse_flow_log(const std::string& text) {
  std::istringstream in(text);
  return parse_flow_log(in);
}

/// Renders one decrypted record as an explicit application-layer event.
/// The client-side port is 0: the record originates at the proxy, not a
/// socket we observed.
inline NetworkEvent to_event(const DecryptedRecord& r) {
  NetworkEvent e;
  e.timestamp = r.timestamp;
  e.transport = Transport::TCP;
  if (r.direction == Direction::Request) {
    e.type = EventType::HTTP_REQ;
    e.src = r.client;
    e.dst = r.server;
    e.sport = 0;
    e.dport = r.server_port;
    e.attrs.set("method", r.method);
    if (!r.host.empty()) e.attrs.set("host", r.host);
    if (!r.path.empty()) e.attrs.set("path", r.path);
    if (!r.body_excerpt.empty()) e.attrs.set("body_excerpt", r.body_excerpt);
  } else {
    e.type = EventType::HTTP_RESP;
    e.src = r.server;
    e.dst = r.client;
    e.sport = r.server_port;
    e.dport = 0;
    e.attrs.set("status", std::to_string(r.status.value_or(0)));
    if (!r.body_excerpt.empty()) e.attrs.set("body_excerpt", r.body_excerpt);
    if (r.duration_ms) e.attrs.set("duration_ms", detail::format_real(*r.duration_ms));
  }
  return e;
}

/// Inserts decrypted records into a packet-derived trace by timestamp.
/// Records never replace packet events; on a timestamp tie every packet
/// event precedes the record. Both input orders are preserved.
inline EventTrace merge(const EventTrace& packet_trace, const std::vector<DecryptedRecord>& records) {
  std::vector<NetworkEvent> rec_events;
  rec_events.reserve(records.size());
  for (const auto& r : records) rec_events.push_back(to_event(r));
  std::stable_sort(rec_events.begin(), rec_events.end(),
                   [](const NetworkEvent& a, const NetworkEvent& b) {
                     return a.timestamp < b.timestamp;
                   });

  EventTrace out;
  out.session_id = packet_trace.session_id;
  out.origin = TraceOrigin::Merged;
  out.events.reserve(packet_trace.events.size() + rec_events.size());

  std::size_t pi = 0, ri = 0;
  while (pi < packet_trace.events.size() && ri < rec_events.size()) {
    // Decrypted-after tie rule: packets win equality.
    if (packet_trace.events[pi].timestamp <= rec_events[ri].timestamp) {
      out.events.push_back(packet_trace.events[pi++]);
    } else {
      out.events.push_back(std::move(rec_events[ri++]));
    }
  }
  while (pi < packet_trace.events.size()) out.events.push_back(packet_trace.events[pi++]);
  while (ri < rec_events.size()) out.events.push_back(std::move(rec_events[ri++]));
  return out;
}

}  // namespace netwarden
