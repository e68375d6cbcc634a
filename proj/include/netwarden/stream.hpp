#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "netwarden/detect.hpp"
#include "netwarden/serialize.hpp"

namespace netwarden {

enum class AlertAction { Raise, Ignore };

/// The raw alert rule, before session latching: anything that is neither
/// benign nor invalid is alertable.
inline bool is_alertable(const Verdict& v) {
  return v.label != kBenignLabel && v.label != kInvalidLabel;
}

struct StreamConfig {
  int delta = 50;    // detector runs every delta newly observed events
  int window = 100;  // most recent events handed to the detector
  double reorder_slack_s = 0.100;
  TimeZoneOffset tz{};
  std::size_t serialize_budget = kDefaultSerializeBudget;
  bool record_window_text = false;  // keep serialized windows (used by tests)
};

struct DetectorTiming {
  std::size_t invocations = 0;
  double total_ms = 0.0;
  double max_ms = 0.0;

  double mean_ms() const { return invocations == 0 ? 0.0 : total_ms / invocations; }
};

struct SessionReport {
  std::string session_id;
  std::size_t events_seen = 0;
  std::size_t late_events = 0;
  std::vector<Verdict> window_verdicts;
  std::vector<Verdict> alerts_raised;
  Verdict aggregate;
  DetectorTiming timing;

  nlohmann::json to_json() const {
    const auto verdict_json = [](const Verdict& v) {
      nlohmann::json j;
      j["label"] = v.label;
      j["trace_ref"] = v.trace_ref;
      j["valid"] = v.valid;
      if (v.window_ref) j["window_ref"] = {v.window_ref->first, v.window_ref->second};
      return j;
    };
    nlohmann::json j;
    j["session_id"] = session_id;
    j["events_seen"] = events_seen;
    j["late_events"] = late_events;
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& v : window_verdicts) windows.push_back(verdict_json(v));
    j["window_verdicts"] = windows;
    nlohmann::json alerts = nlohmann::json::array();
    for (const auto& v : alerts_raised) alerts.push_back(verdict_json(v));
    j["alerts_raised"] = alerts;
    j["aggregate"] = verdict_json(aggregate);
    j["detector_invocations"] = timing.invocations;
    j["detector_mean_ms"] = timing.mean_ms();
    j["detector_max_ms"] = timing.max_ms;
    return j;
  }
};

/// Online detection over a growing event sequence: every delta events the
/// most recent window is re-indexed, serialized, and classified. Alerts fire
/// immediately on a malicious window and are latched per technique.
class StreamSession {
 public:
  StreamSession(std::string session_id, StreamConfig cfg, std::shared_ptr<const Detector> detector,
                TechniqueCatalog catalog)
      : session_id_(std::move(session_id)),
        cfg_(cfg),
        detector_(std::move(detector)),
        catalog_(std::move(catalog)) {
    if (cfg_.delta < 1) throw Error("stream delta must be >= 1");
    if (cfg_.window < 1) throw Error("stream window must be >= 1");
    if (cfg_.window < cfg_.delta) {
      warnings_.push_back("window (" + std::to_string(cfg_.window) + ") is smaller than delta (" +
                          std::to_string(cfg_.delta) + "); some events will never be classified");
    }
  }

  /// Appends one event; returns a Verdict on trigger ticks, nullopt otherwise.
  /// Backend failures degrade to an invalid verdict with the window recorded.
  std::optional<Verdict> push_event(NetworkEvent event) {
    insert_buffered(std::move(event));
    ++events_seen_;
    if (events_seen_ % static_cast<std::size_t>(cfg_.delta) != 0) return std::nullopt;

    const std::size_t size = std::min<std::size_t>(cfg_.window, events_seen_);
    EventTrace wtrace;
    wtrace.session_id = session_id_;
    wtrace.origin = TraceOrigin::Merged;
    wtrace.events.assign(buffer_.end() - static_cast<std::ptrdiff_t>(size), buffer_.end());

    const auto window_ref = std::make_pair(static_cast<std::int64_t>(events_seen_ - size + 1),
                                           static_cast<std::int64_t>(events_seen_));
    if (cfg_.record_window_text) {
      window_texts_.push_back(serialize_trace(wtrace, cfg_.tz, cfg_.serialize_budget));
    }

    Verdict v;
    const auto started = std::chrono::steady_clock::now();
    try {
      v = detector_->detect(wtrace, catalog_);
    } catch (const BackendUnavailable& e) {
      v = make_invalid_verdict(e.what(), session_id_);
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
            .count();
    timing_.invocations++;
    timing_.total_ms += ms;
    timing_.max_ms = std::max(timing_.max_ms, ms);

    v.trace_ref = session_id_;
    v.window_ref = window_ref;
    verdicts_.push_back(v);

    if (alert_policy(v) == AlertAction::Raise) alerts_raised_.push_back(v);

    // Events older than the window never appear again; drop them.
    if (buffer_.size() > static_cast<std::size_t>(cfg_.window)) {
      buffer_.erase(buffer_.begin(),
                    buffer_.end() - static_cast<std::ptrdiff_t>(cfg_.window));
    }
    return v;
  }

  /// Raise iff the verdict names a technique; identical techniques are
  /// latched per session after the first raise.
  AlertAction alert_policy(const Verdict& v) {
    if (!is_alertable(v)) return AlertAction::Ignore;
    if (latched_.contains(v.label)) return AlertAction::Ignore;
    latched_.insert(v.label);
    return AlertAction::Raise;
  }

  /// Emits the session report: every window verdict, raised alerts, and the
  /// aggregate over valid window verdicts (benign when there are none).
  SessionReport finalize() const {
    SessionReport report;
    report.session_id = session_id_;
    report.events_seen = events_seen_;
    report.late_events = late_events_;
    report.window_verdicts = verdicts_;
    report.alerts_raised = alerts_raised_;
    report.timing = timing_;

    std::vector<Verdict> valid;
    for (const auto& v : verdicts_) {
      if (v.valid) valid.push_back(v);
    }
    report.aggregate =
        valid.empty() ? make_benign_verdict(session_id_) : aggregate_tool_verdict(valid);
    return report;
  }

  std::size_t events_seen() const { return events_seen_; }
  std::size_t late_events() const { return late_events_; }
  const std::vector<Verdict>& verdicts() const { return verdicts_; }
  const std::vector<Verdict>& alerts_raised() const { return alerts_raised_; }
  const std::vector<std::string>& window_texts() const { return window_texts_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::string& session_id() const { return session_id_; }

 private:
  /// Timestamps up to the reorder slack behind the newest event are inserted
  /// in order; anything older is appended at the tail and counted late.
  void insert_buffered(NetworkEvent event) {
    if (buffer_.empty() || event.timestamp >= buffer_.back().timestamp) {
      buffer_.push_back(std::move(event));
      return;
    }
    if (buffer_.back().timestamp - event.timestamp <= cfg_.reorder_slack_s) {
      auto pos = buffer_.end();
      while (pos != buffer_.begin() && std::prev(pos)->timestamp > event.timestamp) --pos;
      buffer_.insert(pos, std::move(event));
      return;
    }
    ++late_events_;
    buffer_.push_back(std::move(event));
  }

  std::string session_id_;
  StreamConfig cfg_;
  std::shared_ptr<const Detector> detector_;
  TechniqueCatalog catalog_;

  std::vector<NetworkEvent> buffer_;
  std::size_t events_seen_ = 0;
  std::size_t late_events_ = 0;
  std::vector<Verdict> verdicts_;
  std::vector<Verdict> alerts_raised_;
  std::set<std::string> latched_;
  std::vector<std::string> window_texts_;
  std::vector<std::string> warnings_;
  DetectorTiming timing_;
};

}  // namespace netwarden
