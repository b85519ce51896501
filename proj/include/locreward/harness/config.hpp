#pragma once

// Engine configuration and its JSON form. Precedence when resolving a request:
// request override > command-line flags > config file > built-in defaults.

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "locreward/error.hpp"
#include "locreward/grpo.hpp"
#include "locreward/matching.hpp"
#include "locreward/parsing.hpp"
#include "locreward/reward.hpp"

namespace locreward::harness {

using nlohmann::json;

struct EngineConfig {
  PhaseConfig phase;
  MatcherPolicy matcher = MatcherPolicy::box_only;
  CompletionFormat format = CompletionFormat::structured();
  /// Coordinate convention of completions; defaults per format when unset.
  std::optional<SpaceKind> coords;
  RewardOptions reward;
  double beta = kDefaultBeta;
  double epsilon = kDefaultAdvantageEpsilon;
  KlMode kl = KlMode::per_token_k3;
  std::optional<double> clip;

  SpaceKind completion_space_kind() const { return coords.value_or(format.default_space()); }
  ObjectiveOptions objective_options() const { return {beta, kl, clip}; }

  void validate() const {
    phase.validate();
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw Error(ErrorCode::invalid_config, "beta must be finite and >= 0");
    if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_config, "epsilon must be positive");
    if (clip && !(*clip > 0.0 && *clip < 1.0)) throw Error(ErrorCode::invalid_config, "clip must lie in (0, 1)");
  }
};

// --- enum <-> text ---------------------------------------------------------

inline std::string_view to_string(MatcherPolicy p) { return p == MatcherPolicy::box_only ? "box" : "box-label"; }
inline std::string_view to_string(FormatKind f) { return f == FormatKind::plain_text_pairs ? "plain" : "structured"; }
inline std::string_view to_string(SpaceKind s) {
  return s == SpaceKind::normalized_thousandths ? "thousandths" : "pixels";
}

inline MatcherPolicy parse_matcher(std::string_view s) {
  if (s == "box" || s == "box-only") return MatcherPolicy::box_only;
  if (s == "box-label" || s == "box-and-label") return MatcherPolicy::box_and_label;
  throw Error(ErrorCode::invalid_config, "unknown matcher '" + std::string(s) + "'");
}

inline FormatKind parse_format(std::string_view s) {
  if (s == "structured") return FormatKind::structured_object_list;
  if (s == "plain") return FormatKind::plain_text_pairs;
  throw Error(ErrorCode::invalid_config, "unknown format '" + std::string(s) + "'");
}

inline SpaceKind parse_space_kind(std::string_view s) {
  if (s == "pixels") return SpaceKind::absolute_pixels;
  if (s == "thousandths") return SpaceKind::normalized_thousandths;
  throw Error(ErrorCode::invalid_config, "unknown coordinate space '" + std::string(s) + "'");
}

inline KlMode parse_kl_mode(std::string_view s) {
  if (s == "k3") return KlMode::per_token_k3;
  if (s == "seq") return KlMode::sequence_log_ratio;
  throw Error(ErrorCode::invalid_config, "unknown kl mode '" + std::string(s) + "'");
}

// --- JSON helpers ----------------------------------------------------------

namespace detail {

[[noreturn]] inline void bad(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline double get_number(const json& j, std::string_view key, ErrorCode code) {
  if (!j.is_number()) bad(code, std::string(key) + " must be a number");
  return j.get<double>();
}

inline bool get_bool(const json& j, std::string_view key, ErrorCode code) {
  if (!j.is_boolean()) bad(code, std::string(key) + " must be a boolean");
  return j.get<bool>();
}

inline std::string get_string(const json& j, std::string_view key, ErrorCode code) {
  if (!j.is_string()) bad(code, std::string(key) + " must be a string");
  return j.get<std::string>();
}

inline Thresholds get_thresholds(const json& j, std::string_view key, ErrorCode code) {
  if (!j.is_array() || j.size() != 3) bad(code, std::string(key) + " must be [xi0, xi1, xi2]");
  return {get_number(j[0], key, code), get_number(j[1], key, code), get_number(j[2], key, code)};
}

}  // namespace detail

inline json thresholds_to_json(const Thresholds& t) { return json::array({t.xi0, t.xi1, t.xi2}); }

inline json phase_to_json(const PhaseConfig& p) {
  return {{"step_fraction", p.step_fraction},
          {"beginner", thresholds_to_json(p.beginner)},
          {"advanced", thresholds_to_json(p.advanced)}};
}

/// Applies the keys present in `j` on top of `phase`.
inline void apply_phase_json(PhaseConfig& phase, const json& j, ErrorCode code = ErrorCode::invalid_config) {
  if (!j.is_object()) detail::bad(code, "phase must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "step_fraction") phase.step_fraction = detail::get_number(value, key, code);
    else if (key == "beginner") phase.beginner = detail::get_thresholds(value, key, code);
    else if (key == "advanced") phase.advanced = detail::get_thresholds(value, key, code);
    else detail::bad(code, "unknown phase key '" + key + "'");
  }
}

/// Applies the keys present in `j` on top of `cfg`; unknown keys are errors.
inline void apply_config_json(EngineConfig& cfg, const json& j) {
  constexpr auto code = ErrorCode::invalid_config;
  if (!j.is_object()) detail::bad(code, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "beta") cfg.beta = detail::get_number(value, key, code);
    else if (key == "epsilon") cfg.epsilon = detail::get_number(value, key, code);
    else if (key == "kl") cfg.kl = parse_kl_mode(detail::get_string(value, key, code));
    else if (key == "clip") cfg.clip = value.is_null() ? std::nullopt : std::optional(detail::get_number(value, key, code));
    else if (key == "matcher") cfg.matcher = parse_matcher(detail::get_string(value, key, code));
    else if (key == "format") cfg.format.kind = parse_format(detail::get_string(value, key, code));
    else if (key == "coords") cfg.coords = parse_space_kind(detail::get_string(value, key, code));
    else if (key == "require_label") cfg.reward.require_label = detail::get_bool(value, key, code);
    else if (key == "phase") apply_phase_json(cfg.phase, value);
    else if (key == "reward") {
      if (!value.is_object()) detail::bad(code, "reward must be an object");
      for (const auto& [rk, rv] : value.items()) {
        if (rk == "dual_format") cfg.reward.use_dual_format = detail::get_bool(rv, rk, code);
        else if (rk == "recall") cfg.reward.use_recall = detail::get_bool(rv, rk, code);
        else if (rk == "precision") cfg.reward.use_precision = detail::get_bool(rv, rk, code);
        else detail::bad(code, "unknown reward key '" + rk + "'");
      }
    } else {
      detail::bad(code, "unknown config key '" + key + "'");
    }
  }
  cfg.validate();
}

inline json config_to_json(const EngineConfig& cfg) {
  json j = {{"beta", cfg.beta},
            {"epsilon", cfg.epsilon},
            {"kl", to_string(cfg.kl)},
            {"clip", cfg.clip ? json(*cfg.clip) : json(nullptr)},
            {"matcher", to_string(cfg.matcher)},
            {"format", to_string(cfg.format.kind)},
            {"require_label", cfg.reward.require_label},
            {"phase", phase_to_json(cfg.phase)},
            {"reward",
             {{"dual_format", cfg.reward.use_dual_format},
              {"recall", cfg.reward.use_recall},
              {"precision", cfg.reward.use_precision}}}};
  if (cfg.coords) j["coords"] = to_string(*cfg.coords);
  return j;
}

inline EngineConfig load_config_file(const std::string& path, EngineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::invalid_config, path + " is not valid JSON");
  apply_config_json(base, j);
  return base;
}

}  // namespace locreward::harness
