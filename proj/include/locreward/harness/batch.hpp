#pragma once

// Offline scoring of a manifest: one ScoringRequest per line. Lines marked
// "final": true additionally contribute their first completion as the final
// prediction for that image to a detection-metrics pass.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "locreward/harness/service.hpp"
#include "locreward/metrics.hpp"

namespace locreward::harness {

inline constexpr double kHistogramBinWidth = 0.25;
inline constexpr std::size_t kHistogramBins = 12;  // [0, 3]

struct BatchError {
  std::size_t line = 0;
  std::string message;
};

struct BatchReport {
  std::size_t groups_total = 0;
  std::size_t groups_scored = 0;
  std::size_t completions = 0;
  std::size_t format_failures = 0;
  double mean_dual_format = 0.0;
  double mean_recall = 0.0;
  double mean_precision = 0.0;
  double mean_total = 0.0;
  std::vector<std::size_t> histogram = std::vector<std::size_t>(kHistogramBins, 0);
  std::vector<BatchError> errors;
  std::optional<EvalResult> metrics;

  double format_failure_rate() const {
    return completions ? static_cast<double>(format_failures) / static_cast<double>(completions) : 0.0;
  }
};

inline json eval_result_to_json(const EvalResult& r) {
  json per_iou = json::array();
  for (const auto& [t, ap] : r.ap_per_iou) per_iou.push_back({{"iou", t}, {"ap", ap}});
  return {{"map", r.map_5095},
          {"ap50", r.ap50},
          {"ap75", r.ap75},
          {"ar100", r.ar100},
          {"ap_per_iou", per_iou},
          {"unknown_category_predictions", r.unknown_category_predictions},
          {"diagnostics", r.diagnostics}};
}

inline json report_to_json(const BatchReport& r) {
  json errors = json::array();
  for (const auto& e : r.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
  json hist_edges = json::array();
  for (std::size_t i = 0; i <= kHistogramBins; ++i) hist_edges.push_back(static_cast<double>(i) * kHistogramBinWidth);
  json j = {{"v", kWireVersion},
            {"groups_total", r.groups_total},
            {"groups_scored", r.groups_scored},
            {"completions", r.completions},
            {"format_failure_rate", r.format_failure_rate()},
            {"mean_dual_format", r.mean_dual_format},
            {"mean_recall", r.mean_recall},
            {"mean_precision", r.mean_precision},
            {"mean_total", r.mean_total},
            {"reward_histogram", {{"edges", hist_edges}, {"counts", r.histogram}}},
            {"errors", errors}};
  j["metrics"] = r.metrics ? eval_result_to_json(*r.metrics) : json(nullptr);
  return j;
}

/// Per-line problems are collected in the report; the run itself only fails on
/// I/O errors.
inline BatchReport run_batch(std::istream& manifest, std::ostream& responses, const EngineConfig& cfg) {
  BatchReport rep;
  EvalDataset dataset;
  std::vector<std::vector<LabeledBox>> final_predictions;
  std::set<std::string> final_ids;
  double sum_df = 0.0, sum_rc = 0.0, sum_pr = 0.0, sum_total = 0.0;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++rep.groups_total;

    const json j = json::parse(line, nullptr, false);
    std::optional<ScoringRequest> req;
    ScoringResponse resp;
    if (j.is_discarded()) {
      resp = error_response(std::nullopt, ErrorCode::malformed_request, "line is not valid JSON");
    } else {
      try {
        req = request_from_json(j);
        resp = score_group(*req, cfg);
      } catch (const Error& e) {
        resp = handle_line(line, cfg);
      }
    }
    responses << to_json(resp).dump() << '\n';
    if (!responses) throw Error(ErrorCode::io_error, "failed writing responses");
    if (!resp.ok()) {
      rep.errors.push_back({line_no, resp.error->message});
      continue;
    }
    ++rep.groups_scored;
    for (const auto& b : resp.rewards) {
      ++rep.completions;
      if (b.dual_format == 0.0) ++rep.format_failures;
      sum_df += b.dual_format;
      sum_rc += b.recall;
      sum_pr += b.precision;
      sum_total += b.total;
      const auto bin = std::min(kHistogramBins - 1, static_cast<std::size_t>(b.total / kHistogramBinWidth));
      ++rep.histogram[bin];
    }

    if (req && req->final) {
      if (!final_ids.insert(req->sample.image_id).second) {
        rep.errors.push_back({line_no, "duplicate final prediction for image " + req->sample.image_id});
        continue;
      }
      const EngineConfig eff = effective_config(*req, cfg);
      const CoordinateSpace cspace{eff.completion_space_kind(), req->sample.width, req->sample.height};
      auto objects = extract_objects(parse_completion(req->completions.front(), eff.format, cspace));
      for (auto& o : objects) o.box = to_space(o.box, cspace, req->sample.space());
      dataset.images.push_back({req->sample.image_id, {req->sample.gt, req->sample.space()}});
      final_predictions.push_back(std::move(objects));
    }
  }
  if (manifest.bad()) throw Error(ErrorCode::io_error, "failed reading manifest");

  if (rep.completions) {
    const double n = static_cast<double>(rep.completions);
    rep.mean_dual_format = sum_df / n;
    rep.mean_recall = sum_rc / n;
    rep.mean_precision = sum_pr / n;
    rep.mean_total = sum_total / n;
  }
  if (!dataset.images.empty()) {
    std::set<std::string> seen;
    for (const auto& im : dataset.images)
      for (const auto& g : im.gt.instances)
        if (seen.insert(label_key(g.label)).second) dataset.categories.push_back(normalize_label(g.label));
    rep.metrics = evaluate(final_predictions, dataset);
  }
  return rep;
}

/// File-based wrapper: missing or unreadable files are fatal (Error io_error).
inline BatchReport run_batch(const std::string& manifest_path, const std::string& responses_path,
                             const EngineConfig& cfg) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open manifest " + manifest_path);
  std::ofstream out(responses_path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write responses to " + responses_path);
  return run_batch(in, out, cfg);
}

}  // namespace locreward::harness
