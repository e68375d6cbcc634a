// netwarden command-line front end: every subcommand is a thin adapter over
// the library operations, so scripted pipelines and the library agree.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error, 3 malicious verdict
// (detect only, so shell pipelines can gate on detection).

#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "netwarden/netwarden.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitMalicious = 3;

struct CommonOptions {
  std::string tz = "UTC";
  std::size_t budget = netwarden::kDefaultSerializeBudget;
};

netwarden::TechniqueCatalog load_catalog(const std::string& path) {
  if (path.empty()) return netwarden::TechniqueCatalog::builtin_default();
  return netwarden::TechniqueCatalog::load_file(path);
}

netwarden::FilterPolicy load_policy(const std::string& path, bool no_default) {
  if (!path.empty()) return netwarden::FilterPolicy::load_file(path);
  if (no_default) return netwarden::FilterPolicy{};
  return netwarden::FilterPolicy::default_policy();
}

std::shared_ptr<const netwarden::Detector> make_detector(const std::string& backend,
                                                         const std::string& remote_config,
                                                         const CommonOptions& common) {
  if (backend == "rules") return std::make_shared<netwarden::RuleDetector>();
  if (backend == "remote") {
    netwarden::RemoteConfig cfg = remote_config.empty()
                                      ? netwarden::RemoteConfig::from_env()
                                      : netwarden::RemoteConfig::load_file(remote_config);
    return std::make_shared<netwarden::RemoteDetector>(
        cfg, netwarden::TimeZoneOffset::parse(common.tz), common.budget);
  }
  throw netwarden::Error("unknown backend: " + backend);
}

int cmd_extract(const std::string& pcap_path, const std::string& policy_path, bool no_default,
                const std::string& out_path, const std::string& session_id) {
  const netwarden::FilterPolicy policy = load_policy(policy_path, no_default);
  std::string sid = session_id;
  if (sid.empty()) sid = std::filesystem::path(pcap_path).stem().string();
  const netwarden::EventTrace trace = netwarden::extract_events_file(pcap_path, policy, sid);
  if (out_path.empty() || out_path == "-") {
    netwarden::write_trace(std::cout, trace);
  } else {
    netwarden::write_trace_file(out_path, trace);
  }
  std::cerr << "extracted " << trace.events.size() << " events\n";
  return kExitOk;
}

int cmd_merge(const std::string& trace_path, const std::string& flows_path,
              const std::string& out_path) {
  const netwarden::EventTrace trace = netwarden::read_trace_file(trace_path);
  std::ifstream flows(flows_path);
  if (!flows) throw netwarden::Error("cannot open flow log: " + flows_path);
  const netwarden::FlowParseResult parsed = netwarden::parse_flow_log(flows);
  for (const auto& issue : parsed.issues) {
    std::cerr << "flow log line " << issue.line_no << " skipped: " << issue.message << "\n";
  }
  const netwarden::EventTrace merged = netwarden::merge(trace, parsed.records);
  if (out_path.empty() || out_path == "-") {
    netwarden::write_trace(std::cout, merged);
  } else {
    netwarden::write_trace_file(out_path, merged);
  }
  std::cerr << "merged " << trace.events.size() << " packet events with " << parsed.records.size()
            << " decrypted records\n";
  return kExitOk;
}

int cmd_render(const std::string& trace_path, const CommonOptions& common) {
  const netwarden::EventTrace trace = netwarden::read_trace_file(trace_path);
  const std::string text =
      netwarden::serialize_trace(trace, netwarden::TimeZoneOffset::parse(common.tz), common.budget);
  std::cout << text;
  if (!text.empty()) std::cout << '\n';
  return kExitOk;
}

int cmd_detect(const std::string& trace_path, const std::string& backend,
               const std::string& catalog_path, const std::string& remote_config,
               const CommonOptions& common) {
  const netwarden::TechniqueCatalog catalog = load_catalog(catalog_path);
  const auto detector = make_detector(backend, remote_config, common);
  const netwarden::EventTrace trace = netwarden::read_trace_file(trace_path);
  const netwarden::Verdict verdict = detector->detect(trace, catalog);

  nlohmann::json j;
  j["label"] = verdict.label;
  j["valid"] = verdict.valid;
  j["trace_ref"] = verdict.trace_ref;
  if (!verdict.raw_output.empty() && verdict.raw_output != verdict.label) {
    j["raw_output"] = verdict.raw_output;
  }
  std::cout << j.dump() << "\n";

  if (!verdict.valid) {
    std::cerr << "detector produced no valid prediction\n";
    return kExitRuntime;
  }
  return netwarden::is_malicious(verdict) ? kExitMalicious : kExitOk;
}

int cmd_stream(int delta, int window, const std::string& backend,
               const std::string& catalog_path, const std::string& remote_config,
               const std::string& input_path, const std::string& out_path,
               const std::string& report_path, const std::string& session_id,
               const CommonOptions& common) {
  const netwarden::TechniqueCatalog catalog = load_catalog(catalog_path);
  netwarden::StreamConfig cfg;
  cfg.delta = delta;
  cfg.window = window;
  cfg.tz = netwarden::TimeZoneOffset::parse(common.tz);
  cfg.serialize_budget = common.budget;
  netwarden::StreamSession session(session_id, cfg,
                                   make_detector(backend, remote_config, common), catalog);
  for (const auto& w : session.warnings()) std::cerr << "warning: " << w << "\n";

  std::ifstream file_in;
  std::istream* in = &std::cin;
  if (!input_path.empty() && input_path != "-") {
    file_in.open(input_path);
    if (!file_in) throw netwarden::Error("cannot open event feed: " + input_path);
    in = &file_in;
  }
  std::ofstream file_out;
  std::ostream* out = &std::cout;
  if (!out_path.empty() && out_path != "-") {
    file_out.open(out_path);
    if (!file_out) throw netwarden::Error("cannot open alert sink: " + out_path);
    out = &file_out;
  }

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(*in, line)) {
    ++line_no;
    if (line.empty()) continue;
    netwarden::NetworkEvent event;
    try {
      event = netwarden::event_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      std::cerr << "feed line " << line_no << " skipped: " << e.what() << "\n";
      continue;
    }
    const std::size_t alerts_before = session.alerts_raised().size();
    const auto verdict = session.push_event(event);
    if (verdict && session.alerts_raised().size() > alerts_before) {
      nlohmann::json alert;
      alert["session_id"] = session.session_id();
      alert["window_ref"] = {verdict->window_ref->first, verdict->window_ref->second};
      alert["label"] = verdict->label;
      alert["timestamp"] = event.timestamp;
      *out << alert.dump() << "\n";
      out->flush();
    }
  }

  const netwarden::SessionReport report = session.finalize();
  if (!report_path.empty()) {
    std::ofstream report_out(report_path);
    if (!report_out) throw netwarden::Error("cannot write report: " + report_path);
    report_out << report.to_json().dump(2) << "\n";
  }
  std::cerr << "session " << session.session_id() << ": " << report.events_seen << " events, "
            << report.window_verdicts.size() << " windows, " << report.alerts_raised.size()
            << " alerts, aggregate " << report.aggregate.label << "\n";
  return kExitOk;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  const netwarden::CorpusSpec spec = netwarden::CorpusSpec::load_file(spec_path);
  const auto entries = netwarden::synth_corpus(spec, out_dir);
  std::cerr << "wrote " << entries.size() << " traces + manifest.json to " << out_dir << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& manifest_path, const std::string& predictions_path,
             const std::string& catalog_path, const std::string& out_path, bool by_tool) {
  const netwarden::TechniqueCatalog catalog = load_catalog(catalog_path);
  const auto entries = netwarden::load_manifest(manifest_path);
  std::map<std::string, std::string> truth_by_file;
  for (const auto& e : entries) truth_by_file[e.file] = e.label;

  std::ifstream in(predictions_path);
  if (!in) throw netwarden::Error("cannot open predictions: " + predictions_path);
  std::vector<netwarden::LabeledPair> pairs;
  std::map<std::string, std::vector<netwarden::LabeledPair>> groups;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const std::string file = j.at("file").get<std::string>();
    const auto truth = truth_by_file.find(file);
    if (truth == truth_by_file.end()) {
      throw netwarden::Error("prediction line " + std::to_string(line_no) +
                             " names a file absent from the manifest: " + file);
    }
    netwarden::Verdict v;
    v.label = j.at("label").get<std::string>();
    v.valid = j.value("valid", v.label != netwarden::kInvalidLabel);
    v.trace_ref = file;
    pairs.emplace_back(truth->second, v);
    if (by_tool) {
      groups[j.value("tool", file)].emplace_back(truth->second, v);
    }
  }

  netwarden::EvalReport report =
      by_tool ? netwarden::tool_level_eval(groups) : netwarden::binary_metrics(pairs);
  report.per_technique_f1 = netwarden::per_technique_f1(pairs, catalog.names());

  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw netwarden::Error("cannot write report: " + out_path);
    out << report.to_json().dump(2) << "\n";
  }
  std::cout << report.render_table();
  return kExitOk;
}

int cmd_export(const std::string& manifest_path, const std::string& out_path,
               const CommonOptions& common) {
  netwarden::export_supervised_pairs(manifest_path, out_path,
                                     netwarden::TimeZoneOffset::parse(common.tz), common.budget);
  std::cerr << "wrote dataset to " << out_path << "\n";
  return kExitOk;
}

int cmd_capture(const std::string& cfg_path, const std::vector<std::string>& child_argv) {
  const netwarden::CaptureConfig cfg = cfg_path.empty()
                                           ? netwarden::CaptureConfig{}
                                           : netwarden::CaptureConfig::load_file(cfg_path);
  netwarden::SessionHandle handle = netwarden::begin_session(cfg);

  int child_status = 0;
  if (!child_argv.empty()) {
    const pid_t pid = fork();
    if (pid == 0) {
      std::vector<char*> argv;
      for (const auto& a : child_argv) argv.push_back(const_cast<char*>(a.c_str()));
      argv.push_back(nullptr);
      execvp(argv[0], argv.data());
      _exit(127);
    }
    if (pid < 0) {
      netwarden::end_session(handle);
      throw netwarden::Error("fork failed for the child command");
    }
    waitpid(pid, &child_status, 0);
  }

  const netwarden::SessionArtifacts artifacts = netwarden::end_session(handle);
  for (const auto& w : artifacts.warnings) std::cerr << "warning: " << w << "\n";
  nlohmann::json j;
  j["pcap"] = artifacts.pcap_path;
  j["flow_log"] = artifacts.flow_log_path;
  j["child_exit"] = WIFEXITED(child_status) ? WEXITSTATUS(child_status) : -1;
  std::cout << j.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"network-level guardrail pipeline for agentic tool execution"};
  app.require_subcommand(1);

  CommonOptions common;

  // extract
  auto* extract = app.add_subcommand("extract", "decode a capture file into an event trace");
  std::string pcap_path, policy_path, out_path, session_id;
  bool no_default_policy = false;
  extract->add_option("pcap", pcap_path, "PCAP/PCAPNG file")->required();
  extract->add_option("--policy", policy_path, "filter policy JSON");
  extract->add_flag("--no-default-policy", no_default_policy,
                    "start from an empty policy instead of the shipped denylist");
  extract->add_option("-o,--output", out_path, "output trace (JSON lines, - for stdout)");
  extract->add_option("--session-id", session_id, "session id stored in the trace");

  // merge
  auto* merge_cmd = app.add_subcommand("merge", "insert decrypted flow records into a trace");
  std::string merge_trace, merge_flows, merge_out;
  merge_cmd->add_option("trace", merge_trace, "packet trace (JSON lines)")->required();
  merge_cmd->add_option("flows", merge_flows, "flow log (JSON lines)")->required();
  merge_cmd->add_option("-o,--output", merge_out, "output trace");

  // render
  auto* render = app.add_subcommand("render", "print the canonical text form of a trace");
  std::string render_trace;
  render->add_option("trace", render_trace, "trace file (JSON lines)")->required();
  render->add_option("--budget", common.budget, "maximum characters before truncation");
  render->add_option("--tz", common.tz, "clock timezone (UTC, +HH:MM, -HH:MM)");

  // detect
  auto* detect = app.add_subcommand("detect", "classify a trace; exit 3 on a malicious verdict");
  std::string detect_trace, backend = "rules", catalog_path, remote_config;
  detect->add_option("trace", detect_trace, "trace file (JSON lines)")->required();
  detect->add_option("--backend", backend, "rules | remote")
      ->check(CLI::IsMember({"rules", "remote"}));
  detect->add_option("--catalog", catalog_path, "technique catalog JSON");
  detect->add_option("--remote-config", remote_config, "remote endpoint config JSON");
  detect->add_option("--budget", common.budget, "serialization budget for remote prompts");
  detect->add_option("--tz", common.tz, "clock timezone");

  // stream
  auto* stream = app.add_subcommand("stream", "online detection over an event feed");
  int delta = 50, window = 100;
  std::string stream_in, stream_out, report_path, stream_session = "stream";
  stream->add_option("--delta", delta, "events between detector runs");
  stream->add_option("--window", window, "window size handed to the detector");
  stream->add_option("--backend", backend, "rules | remote")
      ->check(CLI::IsMember({"rules", "remote"}));
  stream->add_option("--catalog", catalog_path, "technique catalog JSON");
  stream->add_option("--remote-config", remote_config, "remote endpoint config JSON");
  stream->add_option("--input", stream_in, "event feed (JSON lines, - for stdin)");
  stream->add_option("-o,--output", stream_out, "alert sink (JSON lines, - for stdout)");
  stream->add_option("--report", report_path, "write the session report JSON here");
  stream->add_option("--session-id", stream_session, "session id for alerts");
  stream->add_option("--tz", common.tz, "clock timezone");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
  std::string spec_path, synth_out;
  synth->add_option("--spec", spec_path, "corpus spec JSON")->required();
  synth->add_option("-o,--output", synth_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "score predictions against a corpus manifest");
  std::string manifest_path, predictions_path, eval_out;
  bool by_tool = false;
  eval->add_option("--manifest", manifest_path, "corpus manifest JSON")->required();
  eval->add_option("--predictions", predictions_path, "JSON lines of {file, label [, tool]}")
      ->required();
  eval->add_option("--catalog", catalog_path, "technique catalog JSON");
  eval->add_option("-o,--output", eval_out, "write the report JSON here");
  eval->add_flag("--by-tool", by_tool, "aggregate per tool before scoring");

  // export
  auto* export_cmd = app.add_subcommand("export", "write supervised (input, label) pairs");
  std::string export_manifest, export_out;
  export_cmd->add_option("--manifest", export_manifest, "corpus manifest JSON")->required();
  export_cmd->add_option("-o,--output", export_out, "dataset file")->required();
  export_cmd->add_option("--tz", common.tz, "clock timezone");
  export_cmd->add_option("--budget", common.budget, "serialization budget");

  // capture
  auto* capture = app.add_subcommand("capture",
                                     "run a command inside an interception session");
  std::string capture_cfg;
  std::vector<std::string> child_argv;
  capture->add_option("--cfg", capture_cfg, "capture config JSON");
  capture->add_option("command", child_argv, "child command after --");
  capture->positionals_at_end();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (extract->parsed()) {
      return cmd_extract(pcap_path, policy_path, no_default_policy, out_path, session_id);
    }
    if (merge_cmd->parsed()) return cmd_merge(merge_trace, merge_flows, merge_out);
    if (render->parsed()) return cmd_render(render_trace, common);
    if (detect->parsed()) {
      return cmd_detect(detect_trace, backend, catalog_path, remote_config, common);
    }
    if (stream->parsed()) {
      return cmd_stream(delta, window, backend, catalog_path, remote_config, stream_in,
                        stream_out, report_path, stream_session, common);
    }
    if (synth->parsed()) return cmd_synth(spec_path, synth_out);
    if (eval->parsed()) {
      return cmd_eval(manifest_path, predictions_path, catalog_path, eval_out, by_tool);
    }
    if (export_cmd->parsed()) return cmd_export(export_manifest, export_out, common);
    if (capture->parsed()) return cmd_capture(capture_cfg, child_argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
