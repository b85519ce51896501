#pragma once

/// @file wire.hpp
/// @brief Line-delimited JSON protocol between a trainer and the scoring
/// engine. Every message carries `"v": 1`.
///
/// Request:
///   {"v":1, "request_id":"r1",
///    "sample":{"image_id":"img1","width":640,"height":480,"task":"object-detection",
///              "gt":[{"label":"cat","bbox":[x1,y1,x2,y2]}]},
///    "completions":["...", "..."],
///    "logprobs":[{"policy":[...],"old":[...],"ref":[...]}, ...],   (optional)
///    "progress":0.3,
///    "format":"structured"|"plain", "coords":"pixels"|"thousandths",
///    "matcher":"box"|"box-label", "phase":{...}, "advantages":true,
///    "final":false}
///
/// Ground-truth boxes are always absolute pixels.
///
/// Response:
///   {"v":1, "request_id":"r1", "ok":true, "rewards":[{...}], "advantages":[...],
///    "objective":J, "kl":[...], "clamped_ratios":0, "phase":"beginner",
///    "thresholds":[xi0,xi1,xi2], "diagnostics":[...]}
///   {"v":1, "request_id":"r1"|null, "ok":false,
///    "error":{"code":"malformed-request","message":"..."}}

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "locreward/annotation.hpp"
#include "locreward/curation.hpp"
#include "locreward/grpo.hpp"
#include "locreward/harness/config.hpp"
#include "locreward/reward.hpp"

namespace locreward::harness {

inline constexpr int kWireVersion = 1;

struct WireSample {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::optional<Task> task;
  std::vector<LabeledBox> gt;

  CoordinateSpace space() const { return CoordinateSpace::pixels(width, height); }

  friend bool operator==(const WireSample&, const WireSample&) = default;
};

struct PhaseOverride {
  std::optional<double> step_fraction;
  std::optional<Thresholds> beginner;
  std::optional<Thresholds> advanced;

  void apply(PhaseConfig& p) const {
    if (step_fraction) p.step_fraction = *step_fraction;
    if (beginner) p.beginner = *beginner;
    if (advanced) p.advanced = *advanced;
  }

  friend bool operator==(const PhaseOverride&, const PhaseOverride&) = default;
};

struct ScoringRequest {
  std::string request_id;
  WireSample sample;
  std::vector<std::string> completions;
  std::optional<std::vector<LogProbRecord>> logprobs;
  double progress = 0.0;
  std::optional<FormatKind> format;
  std::optional<SpaceKind> coords;
  std::optional<MatcherPolicy> matcher;
  std::optional<PhaseOverride> phase;
  bool want_advantages = true;
  bool final = false;

  friend bool operator==(const ScoringRequest&, const ScoringRequest&) = default;
};

struct WireError {
  std::string code;
  std::string message;

  friend bool operator==(const WireError&, const WireError&) = default;
};

struct ScoringResponse {
  std::optional<std::string> request_id;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;
  std::optional<double> objective;
  std::vector<double> kl_values;
  std::size_t clamped_ratios = 0;
  Phase phase = Phase::beginner;
  Thresholds thresholds;
  std::vector<std::string> diagnostics;
  std::optional<WireError> error;

  bool ok() const noexcept { return !error.has_value(); }

  friend bool operator==(const ScoringResponse&, const ScoringResponse&) = default;
};

namespace detail {

constexpr auto kReq = ErrorCode::malformed_request;

inline const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) bad(kReq, std::string("missing field '") + key + "'");
  return *it;
}

inline std::vector<double> get_number_list(const json& j, std::string_view key) {
  if (!j.is_array()) bad(kReq, std::string(key) + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(get_number(v, key, kReq));
  return out;
}

inline std::string get_id(const json& j, std::string_view key) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  bad(kReq, std::string(key) + " must be a string or integer");
}

inline int get_dimension(const json& j, std::string_view key) {
  if (!j.is_number_integer()) bad(kReq, std::string(key) + " must be an integer");
  const auto v = j.get<long long>();
  if (v < 1 || v > 1'000'000'000) bad(kReq, std::string(key) + " out of range");
  return static_cast<int>(v);
}

}  // namespace detail

inline json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

inline Box box_from_json(const json& j, ErrorCode code = ErrorCode::malformed_request) {
  if (!j.is_array() || j.size() != 4) detail::bad(code, "bbox must be [x1, y1, x2, y2]");
  return {detail::get_number(j[0], "bbox", code), detail::get_number(j[1], "bbox", code),
          detail::get_number(j[2], "bbox", code), detail::get_number(j[3], "bbox", code)};
}

inline json objects_to_json(const std::vector<LabeledBox>& objects) {
  json arr = json::array();
  for (const auto& o : objects) arr.push_back({{"label", o.label}, {"bbox", box_to_json(o.box)}});
  return arr;
}

inline std::vector<LabeledBox> objects_from_json(const json& j, ErrorCode code = ErrorCode::malformed_request) {
  if (!j.is_array()) detail::bad(code, "object list must be an array");
  std::vector<LabeledBox> out;
  for (const auto& o : j) {
    if (!o.is_object()) detail::bad(code, "object entries must be objects");
    auto label = o.find("label");
    auto bbox = o.find("bbox");
    if (label == o.end() || bbox == o.end()) detail::bad(code, "object entries need label and bbox");
    out.push_back({detail::get_string(*label, "label", code), box_from_json(*bbox, code)});
  }
  return out;
}

inline json to_json(const ScoringRequest& r) {
  json sample = {{"image_id", r.sample.image_id},
                 {"width", r.sample.width},
                 {"height", r.sample.height},
                 {"gt", objects_to_json(r.sample.gt)}};
  if (r.sample.task) sample["task"] = to_string(*r.sample.task);
  json j = {{"v", kWireVersion},
            {"request_id", r.request_id},
            {"sample", sample},
            {"completions", r.completions},
            {"progress", r.progress}};
  if (r.logprobs) {
    json lp = json::array();
    for (const auto& rec : *r.logprobs)
      lp.push_back({{"policy", rec.policy_logprobs}, {"old", rec.old_logprobs}, {"ref", rec.ref_logprobs}});
    j["logprobs"] = lp;
  }
  if (r.format) j["format"] = to_string(*r.format);
  if (r.coords) j["coords"] = to_string(*r.coords);
  if (r.matcher) j["matcher"] = to_string(*r.matcher);
  if (r.phase) {
    json p = json::object();
    if (r.phase->step_fraction) p["step_fraction"] = *r.phase->step_fraction;
    if (r.phase->beginner) p["beginner"] = thresholds_to_json(*r.phase->beginner);
    if (r.phase->advanced) p["advanced"] = thresholds_to_json(*r.phase->advanced);
    j["phase"] = p;
  }
  if (!r.want_advantages) j["advantages"] = false;
  if (r.final) j["final"] = true;
  return j;
}

/// Throws Error(malformed_request) describing the first problem found.
inline ScoringRequest request_from_json(const json& j) {
  using namespace detail;
  if (!j.is_object()) bad(kReq, "request must be a JSON object");
  if (auto v = j.find("v"); v == j.end() || !v->is_number_integer() || v->get<int>() != kWireVersion)
    bad(kReq, "unsupported or missing wire version (expected \"v\":1)");
  static const std::vector<std::string> known = {"v", "request_id", "sample", "completions", "logprobs", "progress",
                                                 "format", "coords", "matcher", "phase", "advantages", "final"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) bad(kReq, "unknown field '" + key + "'");

  ScoringRequest r;
  r.request_id = get_id(require(j, "request_id"), "request_id");
  const json& s = require(j, "sample");
  if (!s.is_object()) bad(kReq, "sample must be an object");
  r.sample.image_id = get_id(require(s, "image_id"), "image_id");
  r.sample.width = get_dimension(require(s, "width"), "width");
  r.sample.height = get_dimension(require(s, "height"), "height");
  if (auto t = s.find("task"); t != s.end()) {
    try {
      r.sample.task = parse_task(get_string(*t, "task", kReq));
    } catch (const Error& e) {
      bad(kReq, e.what());
    }
  }
  r.sample.gt = objects_from_json(require(s, "gt"));

  const json& completions = require(j, "completions");
  if (!completions.is_array()) bad(kReq, "completions must be an array of strings");
  for (const auto& c : completions) r.completions.push_back(get_string(c, "completion", kReq));

  if (auto lp = j.find("logprobs"); lp != j.end() && !lp->is_null()) {
    if (!lp->is_array()) bad(kReq, "logprobs must be an array");
    std::vector<LogProbRecord> recs;
    for (const auto& rec : *lp) {
      if (!rec.is_object()) bad(kReq, "logprob records must be objects");
      recs.push_back({get_number_list(require(rec, "policy"), "policy"), get_number_list(require(rec, "old"), "old"),
                      get_number_list(require(rec, "ref"), "ref")});
    }
    r.logprobs = std::move(recs);
  }
  r.progress = get_number(require(j, "progress"), "progress", kReq);

  try {
    if (auto f = j.find("format"); f != j.end()) r.format = parse_format(get_string(*f, "format", kReq));
    if (auto c = j.find("coords"); c != j.end()) r.coords = parse_space_kind(get_string(*c, "coords", kReq));
    if (auto m = j.find("matcher"); m != j.end()) r.matcher = parse_matcher(get_string(*m, "matcher", kReq));
  } catch (const Error& e) {
    if (e.code() == kReq) throw;
    bad(kReq, e.what());
  }
  if (auto p = j.find("phase"); p != j.end()) {
    if (!p->is_object()) bad(kReq, "phase must be an object");
    PhaseOverride o;
    for (const auto& [key, value] : p->items()) {
      if (key == "step_fraction") o.step_fraction = get_number(value, key, kReq);
      else if (key == "beginner") o.beginner = get_thresholds(value, key, kReq);
      else if (key == "advanced") o.advanced = get_thresholds(value, key, kReq);
      else bad(kReq, "unknown phase key '" + key + "'");
    }
    r.phase = o;
  }
  if (auto a = j.find("advantages"); a != j.end()) r.want_advantages = get_bool(*a, "advantages", kReq);
  if (auto f = j.find("final"); f != j.end()) r.final = get_bool(*f, "final", kReq);
  return r;
}

inline json breakdown_to_json(const RewardBreakdown& b) {
  return {{"dual_format", b.dual_format}, {"recall", b.recall},   {"precision", b.precision},
          {"total", b.total},             {"m", b.m_predictions}, {"n_gt", b.n_gt},
          {"n_valid", b.n_valid}};
}

inline RewardBreakdown breakdown_from_json(const json& j) {
  using namespace detail;
  RewardBreakdown b;
  b.dual_format = get_number(require(j, "dual_format"), "dual_format", kReq);
  b.recall = get_number(require(j, "recall"), "recall", kReq);
  b.precision = get_number(require(j, "precision"), "precision", kReq);
  b.total = get_number(require(j, "total"), "total", kReq);
  b.m_predictions = require(j, "m").get<std::size_t>();
  b.n_gt = require(j, "n_gt").get<std::size_t>();
  b.n_valid = require(j, "n_valid").get<std::size_t>();
  return b;
}

inline json to_json(const ScoringResponse& r) {
  json j = {{"v", kWireVersion}, {"request_id", r.request_id ? json(*r.request_id) : json(nullptr)}, {"ok", r.ok()}};
  if (r.error) {
    j["error"] = {{"code", r.error->code}, {"message", r.error->message}};
    return j;
  }
  json rewards = json::array();
  for (const auto& b : r.rewards) rewards.push_back(breakdown_to_json(b));
  j["rewards"] = rewards;
  j["advantages"] = r.advantages;
  if (r.objective) {
    j["objective"] = *r.objective;
    j["kl"] = r.kl_values;
    j["clamped_ratios"] = r.clamped_ratios;
  }
  j["phase"] = to_string(r.phase);
  j["thresholds"] = thresholds_to_json(r.thresholds);
  j["diagnostics"] = r.diagnostics;
  return j;
}

inline ScoringResponse response_from_json(const json& j) {
  using namespace detail;
  if (!j.is_object()) bad(kReq, "response must be a JSON object");
  ScoringResponse r;
  const json& id = require(j, "request_id");
  if (!id.is_null()) r.request_id = get_id(id, "request_id");
  if (!get_bool(require(j, "ok"), "ok", kReq)) {
    const json& e = require(j, "error");
    r.error = WireError{get_string(require(e, "code"), "code", kReq), get_string(require(e, "message"), "message", kReq)};
    return r;
  }
  for (const auto& b : require(j, "rewards")) r.rewards.push_back(breakdown_from_json(b));
  r.advantages = get_number_list(require(j, "advantages"), "advantages");
  if (auto o = j.find("objective"); o != j.end()) {
    r.objective = get_number(*o, "objective", kReq);
    r.kl_values = get_number_list(require(j, "kl"), "kl");
    r.clamped_ratios = require(j, "clamped_ratios").get<std::size_t>();
  }
  const std::string phase = get_string(require(j, "phase"), "phase", kReq);
  if (phase != "beginner" && phase != "advanced") bad(kReq, "unknown phase '" + phase + "'");
  r.phase = phase == "beginner" ? Phase::beginner : Phase::advanced;
  r.thresholds = get_thresholds(require(j, "thresholds"), "thresholds", kReq);
  for (const auto& d : require(j, "diagnostics")) r.diagnostics.push_back(get_string(d, "diagnostic", kReq));
  return r;
}

inline ScoringResponse error_response(std::optional<std::string> request_id, ErrorCode code, std::string message) {
  ScoringResponse r;
  r.request_id = std::move(request_id);
  r.error = WireError{std::string(to_string(code)), std::move(message)};
  return r;
}

}  // namespace locreward::harness
