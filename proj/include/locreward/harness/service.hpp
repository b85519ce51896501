#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "locreward/grpo.hpp"
#include "locreward/harness/config.hpp"
#include "locreward/harness/wire.hpp"
#include "locreward/reward.hpp"

namespace locreward::harness {

/// Resolves request-level overrides on top of the engine configuration.
inline EngineConfig effective_config(const ScoringRequest& req, EngineConfig cfg) {
  if (req.format) cfg.format.kind = *req.format;
  if (req.coords) cfg.coords = *req.coords;
  if (req.matcher) cfg.matcher = *req.matcher;
  if (req.phase) req.phase->apply(cfg.phase);
  return cfg;
}

namespace detail {

inline void check_request(const ScoringRequest& req, const EngineConfig& cfg) {
  const std::size_t n = req.completions.size();
  if (n == 0) bad(kReq, "completions is empty");
  if (req.want_advantages && n < 2) bad(kReq, "advantages need at least two completions (N >= 2)");
  if (req.logprobs && req.logprobs->size() != n) bad(kReq, "one logprob record per completion is required");
  if (req.logprobs && n < 2) bad(kReq, "the objective needs at least two completions");
  if (!(req.progress >= 0.0 && req.progress <= 1.0)) bad(kReq, "progress must lie in [0, 1]");
  for (std::size_t i = 0; i < req.sample.gt.size(); ++i) {
    const auto& g = req.sample.gt[i];
    if (normalize_label(g.label).empty()) bad(kReq, "gt " + std::to_string(i) + ": empty label");
    if (auto c = validate_box(g.box, req.sample.space()); !c) bad(kReq, "gt " + std::to_string(i) + ": " + c.reason);
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    bad(kReq, e.what());
  }
}

}  // namespace detail

/// Scores every completion of one group and, when requested, standardizes the
/// totals into advantages and evaluates the objective. Never throws.
inline ScoringResponse score_group(const ScoringRequest& req, const EngineConfig& base) {
  try {
    const EngineConfig cfg = effective_config(req, base);
    detail::check_request(req, cfg);

    ScoringResponse resp;
    resp.request_id = req.request_id;
    resp.phase = active_phase(cfg.phase, req.progress);
    resp.thresholds = phase_thresholds(cfg.phase, req.progress);

    const GroundTruthSet gt{req.sample.gt, req.sample.space()};
    const CoordinateSpace completion_space{cfg.completion_space_kind(), req.sample.width, req.sample.height};
    std::vector<double> totals;
    for (std::size_t i = 0; i < req.completions.size(); ++i) {
      const ParseOutcome outcome = parse_completion(req.completions[i], cfg.format, completion_space);
      for (const auto& d : outcome.diagnostics) resp.diagnostics.push_back("completion " + std::to_string(i) + ": " + d);
      std::vector<LabeledBox> objects = extract_objects(outcome);
      for (auto& o : objects) o.box = to_space(o.box, completion_space, gt.space);
      const auto matches = match(objects, gt.space, gt, cfg.matcher);
      resp.rewards.push_back(score_matches(outcome, matches, gt.size(), resp.thresholds, cfg.reward));
      totals.push_back(resp.rewards.back().total);
    }
    if (req.want_advantages || req.logprobs) resp.advantages = group_advantages(totals, cfg.epsilon);
    if (req.logprobs) {
      auto obj = grpo_objective(*req.logprobs, resp.advantages, cfg.objective_options());
      resp.objective = obj.objective;
      resp.kl_values = std::move(obj.kl_values);
      resp.clamped_ratios = obj.clamped_ratios;
      if (obj.clamped_ratios > 0)
        resp.diagnostics.push_back(std::to_string(obj.clamped_ratios) + " log-ratio(s) clamped to [-50, 50]");
    }
    return resp;
  } catch (const Error& e) {
    const ErrorCode code =
        e.code() == ErrorCode::malformed_request || e.code() == ErrorCode::invalid_config ? ErrorCode::malformed_request
                                                                                         : e.code();
    return error_response(req.request_id, code, e.what());
  } catch (const std::exception& e) {
    return error_response(req.request_id, ErrorCode::malformed_request, e.what());
  }
}

/// Handles one protocol line; never throws.
inline ScoringResponse handle_line(std::string_view line, const EngineConfig& cfg) {
  const json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return error_response(std::nullopt, ErrorCode::malformed_request, "line is not valid JSON");
  std::optional<std::string> id;
  if (j.is_object()) {
    if (auto it = j.find("request_id"); it != j.end()) {
      if (it->is_string()) id = it->get<std::string>();
      else if (it->is_number_integer()) id = std::to_string(it->get<long long>());
    }
  }
  try {
    return score_group(request_from_json(j), cfg);
  } catch (const Error& e) {
    return error_response(id, e.code(), e.what());
  } catch (const std::exception& e) {
    return error_response(id, ErrorCode::malformed_request, e.what());
  }
}

struct ServiceStats {
  std::size_t requests = 0;
  std::size_t errors = 0;
};

/// Reads newline-delimited requests until end of input and answers each with
/// one line, in order. Blank lines are ignored. Throws Error(io_error) when the
/// output stream fails.
inline ServiceStats run_service(std::istream& in, std::ostream& out, const EngineConfig& cfg) {
  ServiceStats stats;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const ScoringResponse resp = handle_line(line, cfg);
    ++stats.requests;
    if (!resp.ok()) ++stats.errors;
    out << to_json(resp).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::io_error, "failed writing response");
  }
  if (in.bad()) throw Error(ErrorCode::io_error, "failed reading requests");
  return stats;
}

}  // namespace locreward::harness
