#pragma once

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "netwarden/detect.hpp"
#include "netwarden/serialize.hpp"

namespace netwarden {

/// Endpoint settings for the HTTP text-completion backend. The wire contract
/// is a single JSON object {"model", "prompt"} answered by {"completion"};
/// vendor-specific schemas are adapted outside this library.
struct RemoteConfig {
  std::string endpoint;  // http(s)://host[:port][/path]
  std::string api_key;   // sent as a bearer token when non-empty
  std::string model;
  double timeout_s = 30.0;
  int retries = 2;

  static RemoteConfig from_json(const nlohmann::json& j) {
    RemoteConfig c;
    c.endpoint = j.value("endpoint", std::string());
    c.api_key = j.value("api_key", std::string());
    c.model = j.value("model", std::string());
    c.timeout_s = j.value("timeout_s", 30.0);
    c.retries = j.value("retries", 2);
    return c;
  }

  static RemoteConfig load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DetectError("cannot open remote config file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  /// NETWARDEN_ENDPOINT, NETWARDEN_API_KEY, NETWARDEN_MODEL,
  /// NETWARDEN_TIMEOUT_S, NETWARDEN_RETRIES.
  static RemoteConfig from_env() {
    const auto get = [](const char* name) {
      const char* v = std::getenv(name);
      return v != nullptr ? std::string(v) : std::string();
    };
    RemoteConfig c;
    c.endpoint = get("NETWARDEN_ENDPOINT");
    c.api_key = get("NETWARDEN_API_KEY");
    c.model = get("NETWARDEN_MODEL");
    if (const std::string t = get("NETWARDEN_TIMEOUT_S"); !t.empty()) c.timeout_s = std::stod(t);
    if (const std::string r = get("NETWARDEN_RETRIES"); !r.empty()) c.retries = std::stoi(r);
    return c;
  }
};

namespace detail {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // starts with '/'
};

inline SplitUrl split_url(const std::string& url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw DetectError("endpoint URL needs a scheme: " + url);
  const std::size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

/// The paper-style LLM pathway: serialize the trace, wrap it in the detection
/// prompt, send to a completion endpoint, and normalize the answer.
class RemoteDetector final : public Detector {
 public:
  explicit RemoteDetector(RemoteConfig cfg, TimeZoneOffset tz = {},
                          std::size_t budget = kDefaultSerializeBudget)
      : cfg_(std::move(cfg)), tz_(tz), budget_(budget) {
    if (cfg_.endpoint.empty()) throw DetectError("remote detector without an endpoint");
  }

  Verdict detect(const EventTrace& trace, const TechniqueCatalog& catalog) const override {
    const std::string prompt = build_prompt(catalog, serialize_trace(trace, tz_, budget_));
    const std::string completion = complete(prompt);
    const std::string label = normalize_label(completion, catalog);
    Verdict v;
    v.label = label;
    v.raw_output = completion;
    v.trace_ref = trace.session_id;
    v.valid = label != kInvalidLabel;
    return v;
  }

  /// Sends one completion request, retrying transient failures.
  std::string complete(const std::string& prompt) const {
    const detail::SplitUrl url = detail::split_url(cfg_.endpoint);
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["prompt"] = prompt;
    const std::string payload = body.dump();

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
      }
      httplib::Client client(url.base);
      client.set_connection_timeout(std::chrono::duration<double>(cfg_.timeout_s));
      client.set_read_timeout(std::chrono::duration<double>(cfg_.timeout_s));
      client.set_write_timeout(std::chrono::duration<double>(cfg_.timeout_s));
      if (!cfg_.api_key.empty()) client.set_bearer_token_auth(cfg_.api_key);

      auto res = client.Post(url.path, payload, "application/json");
      if (!res) {
        last_error = "connection failed: " + httplib::to_string(res.error());
        continue;  // transport errors are retryable
      }
      if (res->status >= 500) {
        last_error = "server error " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw BackendUnavailable("endpoint returned status " + std::to_string(res->status));
      }
      try {
        const nlohmann::json reply = nlohmann::json::parse(res->body);
        return reply.at("completion").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw BackendUnavailable(std::string("malformed completion response: ") + e.what());
      }
    }
    throw BackendUnavailable("retries exhausted: " + last_error);
  }

  const RemoteConfig& config() const { return cfg_; }

 private:
  RemoteConfig cfg_;
  TimeZoneOffset tz_;
  std::size_t budget_;
};

}  // namespace netwarden
