#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "netwarden/detect.hpp"
#include "netwarden/events.hpp"
#include "netwarden/serialize.hpp"
#include "netwarden/synth.hpp"
#include "netwarden/trace_io.hpp"

namespace netwarden {

class EvalError : public Error {
 public:
  using Error::Error;
};

class EmptyGroup : public EvalError {
 public:
  using EvalError::EvalError;
};

class MissingTraceFile : public EvalError {
 public:
  using EvalError::EvalError;
};

class NonPositiveBaseline : public EvalError {
 public:
  using EvalError::EvalError;
};

/// (truth label, predicted verdict) for one trace or one tool.
using LabeledPair = std::pair<std::string, Verdict>;

struct TechniqueScore {
  double f1 = 0.0;
  int true_count = 0;  // instances with this truth label
  int pred_count = 0;  // valid predictions of this label
};

struct EvalReport {
  double fpr = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::map<std::string, TechniqueScore> per_technique_f1;
  double success_rate = 0.0;
  struct Confusion {
    int tp = 0, fp = 0, fn = 0, tn = 0;
  } confusion;
  double overhead_pct = 0.0;
  int n_total = 0;
  int n_valid = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["fpr"] = fpr;
    j["f1"] = f1;
    j["precision"] = precision;
    j["recall"] = recall;
    j["success_rate"] = success_rate;
    j["confusion"] = {{"tp", confusion.tp}, {"fp", confusion.fp}, {"fn", confusion.fn},
                      {"tn", confusion.tn}};
    j["overhead_pct"] = overhead_pct;
    j["n_total"] = n_total;
    j["n_valid"] = n_valid;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [name, score] : per_technique_f1) {
      per[name] = {{"f1", score.f1}, {"true_count", score.true_count},
                   {"pred_count", score.pred_count}};
    }
    j["per_technique_f1"] = per;
    return j;
  }

  /// Aligned text table for terminals.
  std::string render_table() const {
    char buf[128];
    std::string out;
    out += "metric            value\n";
    out += "----------------  --------\n";
    const auto row = [&](const char* name, double v) {
      std::snprintf(buf, sizeof(buf), "%-16s  %.4f\n", name, v);
      out += buf;
    };
    row("f1", f1);
    row("fpr", fpr);
    row("precision", precision);
    row("recall", recall);
    row("success_rate", success_rate);
    std::snprintf(buf, sizeof(buf), "%-16s  tp=%d fp=%d fn=%d tn=%d\n", "confusion",
                  confusion.tp, confusion.fp, confusion.fn, confusion.tn);
    out += buf;
    if (!per_technique_f1.empty()) {
      out += "\nper-technique F1\n";
      for (const auto& [name, score] : per_technique_f1) {
        const bool absent = score.true_count == 0 && score.pred_count == 0;
        std::snprintf(buf, sizeof(buf), "  %-44s  %.4f%s\n", name.c_str(), score.f1,
                      absent ? "  (absent)" : "");
        out += buf;
      }
    }
    return out;
  }
};

namespace detail {

inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace detail

/// Binary (benign vs malicious) metrics. Invalid verdicts are excluded from
/// the confusion counts and show up only through the success rate.
inline EvalReport binary_metrics(const std::vector<LabeledPair>& pairs) {
  EvalReport r;
  r.n_total = static_cast<int>(pairs.size());
  for (const auto& [truth, verdict] : pairs) {
    if (!verdict.valid) continue;
    ++r.n_valid;
    const bool truth_mal = truth != kBenignLabel;
    const bool pred_mal = verdict.label != kBenignLabel;
    if (truth_mal && pred_mal) ++r.confusion.tp;
    else if (!truth_mal && pred_mal) ++r.confusion.fp;
    else if (truth_mal && !pred_mal) ++r.confusion.fn;
    else ++r.confusion.tn;
  }
  r.success_rate = detail::safe_div(r.n_valid, r.n_total);
  r.fpr = detail::safe_div(r.confusion.fp, r.confusion.fp + r.confusion.tn);
  r.precision = detail::safe_div(r.confusion.tp, r.confusion.tp + r.confusion.fp);
  r.recall = detail::safe_div(r.confusion.tp, r.confusion.tp + r.confusion.fn);
  r.f1 = detail::safe_div(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

/// One-vs-rest F1 per technique, exact label match. Techniques never seen and
/// never predicted keep F1 0 and are flagged absent in the report table.
inline std::map<std::string, TechniqueScore> per_technique_f1(
    const std::vector<LabeledPair>& pairs, const std::vector<std::string>& techniques) {
  std::map<std::string, TechniqueScore> out;
  for (const auto& name : techniques) out[name] = TechniqueScore{};
  // also cover labels that appear in the data but not in the catalog list
  for (const auto& [truth, verdict] : pairs) {
    if (truth != kBenignLabel) out.try_emplace(truth);
    if (verdict.valid && verdict.label != kBenignLabel) out.try_emplace(verdict.label);
  }

  for (auto& [name, score] : out) {
    int tp = 0, fp = 0, fn = 0;
    for (const auto& [truth, verdict] : pairs) {
      if (!verdict.valid) continue;
      const bool is_true = truth == name;
      const bool is_pred = verdict.label == name;
      if (is_true) ++score.true_count;
      if (is_pred) ++score.pred_count;
      if (is_true && is_pred) ++tp;
      else if (!is_true && is_pred) ++fp;
      else if (is_true && !is_pred) ++fn;
    }
    const double precision = detail::safe_div(tp, tp + fp);
    const double recall = detail::safe_div(tp, tp + fn);
    score.f1 = detail::safe_div(2.0 * precision * recall, precision + recall);
  }
  return out;
}

/// Tool-level evaluation: each group is aggregated with the any-malicious
/// rule, group truth is malicious iff any member truth is, and the binary
/// metrics run over group-level pairs. Groups whose members are all invalid
/// yield an invalid group verdict, counted against the success rate.
inline EvalReport tool_level_eval(
    const std::map<std::string, std::vector<LabeledPair>>& groups) {
  std::vector<LabeledPair> group_pairs;
  group_pairs.reserve(groups.size());
  for (const auto& [tool_id, members] : groups) {
    if (members.empty()) throw EmptyGroup("tool group '" + tool_id + "' is empty");
    std::string truth(kBenignLabel);
    std::vector<Verdict> valid_verdicts;
    for (const auto& [member_truth, verdict] : members) {
      if (truth == kBenignLabel && member_truth != kBenignLabel) truth = member_truth;
      if (verdict.valid) valid_verdicts.push_back(verdict);
    }
    Verdict group_verdict = valid_verdicts.empty()
                                ? make_invalid_verdict("all member verdicts invalid", tool_id)
                                : aggregate_tool_verdict(valid_verdicts);
    group_pairs.emplace_back(std::move(truth), std::move(group_verdict));
  }
  return binary_metrics(group_pairs);
}

/// Additional execution time in percent over the baseline mean.
inline double measure_overhead(const std::vector<double>& baseline_runs,
                               const std::vector<double>& pipeline_runs) {
  if (baseline_runs.empty() || pipeline_runs.empty()) {
    throw EvalError("measure_overhead needs non-empty run sets");
  }
  const double base =
      std::accumulate(baseline_runs.begin(), baseline_runs.end(), 0.0) / baseline_runs.size();
  const double pipe =
      std::accumulate(pipeline_runs.begin(), pipeline_runs.end(), 0.0) / pipeline_runs.size();
  if (base <= 0.0) throw NonPositiveBaseline("baseline mean must be positive");
  return 100.0 * (pipe - base) / base;
}

/// Writes the supervised (input, label) pairs a trainer would consume:
/// one JSON object per manifest entry, in manifest order.
inline void export_supervised_pairs(const std::string& manifest_path, const std::string& out_path,
                                    TimeZoneOffset tz = {},
                                    std::size_t budget = kDefaultSerializeBudget) {
  namespace fs = std::filesystem;
  const auto entries = load_manifest(manifest_path);
  const fs::path corpus_dir = fs::path(manifest_path).parent_path();

  std::ofstream out(out_path);
  if (!out) throw EvalError("cannot write dataset file: " + out_path);
  for (const auto& entry : entries) {
    const fs::path trace_path = corpus_dir / entry.file;
    if (!fs::exists(trace_path)) {
      throw MissingTraceFile("manifest names a missing trace file: " + entry.file);
    }
    const EventTrace trace = read_trace_file(trace_path.string(), TraceOrigin::Synthetic);
    nlohmann::json j;
    j["input"] = serialize_trace(trace, tz, budget);
    j["label"] = entry.label;
    out << j.dump() << '\n';
  }
}

}  // namespace netwarden
