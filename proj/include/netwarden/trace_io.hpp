#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netwarden/events.hpp"

namespace netwarden {

class TraceIoError : public Error {
 public:
  using Error::Error;
};

// JSON-lines trace schema: one NetworkEvent object per line with keys
// ts, type, src, dst, sport, dport, transport, attrs (flat string map).

inline nlohmann::json event_to_json(const NetworkEvent& e) {
  nlohmann::json j;
  j["ts"] = e.timestamp;
  j["type"] = std::string(to_string(e.type));
  j["src"] = e.src;
  j["dst"] = e.dst;
  j["sport"] = e.sport;
  j["dport"] = e.dport;
  j["transport"] = std::string(to_string(e.transport));
  nlohmann::json attrs = nlohmann::json::object();
  for (const auto& [k, v] : e.attrs.items()) attrs[k] = v;
  j["attrs"] = attrs;
  return j;
}

inline NetworkEvent event_from_json(const nlohmann::json& j) {
  NetworkEvent e;
  e.timestamp = j.at("ts").get<double>();
  const std::string type_name = j.at("type").get<std::string>();
  auto t = event_type_from_string(type_name);
  if (!t) throw TraceIoError("unknown event type: " + type_name);
  e.type = *t;
  e.src = j.value("src", std::string());
  e.dst = j.value("dst", std::string());
  e.sport = j.value("sport", 0);
  e.dport = j.value("dport", 0);
  const std::string tr_name = j.value("transport", std::string("NONE"));
  auto tr = transport_from_string(tr_name);
  if (!tr) throw TraceIoError("unknown transport: " + tr_name);
  e.transport = *tr;
  if (j.contains("attrs")) {
    for (const auto& [k, v] : j.at("attrs").items()) {
      e.attrs.set(k, v.get<std::string>());
    }
  }
  return e;
}

inline void write_trace(std::ostream& out, const EventTrace& trace) {
  for (const auto& e : trace.events) out << event_to_json(e).dump() << '\n';
}

inline void write_trace_file(const std::string& path, const EventTrace& trace) {
  std::ofstream out(path);
  if (!out) throw TraceIoError("cannot write trace file: " + path);
  write_trace(out, trace);
}

inline EventTrace read_trace(std::istream& in, std::string session_id = {},
                             TraceOrigin origin = TraceOrigin::PcapOnly) {
  std::vector<NetworkEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      events.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw TraceIoError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return make_trace(std::move(events), std::move(session_id), origin);
}

inline EventTrace read_trace_file(const std::string& path,
                                  TraceOrigin origin = TraceOrigin::PcapOnly) {
  std::ifstream in(path);
  if (!in) throw TraceIoError("cannot open trace file: " + path);
  return read_trace(in, std::filesystem::path(path).stem().string(), origin);
}

}  // namespace netwarden
