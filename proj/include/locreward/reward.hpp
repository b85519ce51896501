#pragma once

/// @file reward.hpp
/// @brief Criterion-driven completion reward with progressive threshold
/// refinement.
///
/// total = dual_format + recall + precision, each component in [0, 1].
///
/// A matched prediction is *valid* when its IoU is at least xi0 and (by
/// default) its label matches the assigned ground truth. Recall is the share of
/// ground truth covered by valid predictions, passed through the
/// differentiation map once per completion. Precision sums the differentiated
/// IoU of every valid prediction and divides by the number of predictions M,
/// so redundant boxes cost reward.
///
/// Negative samples (no ground truth) reward abstention: an empty prediction
/// list earns recall 1 and precision 1, any prediction earns 0 for both.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "locreward/error.hpp"
#include "locreward/geometry.hpp"
#include "locreward/matching.hpp"
#include "locreward/parsing.hpp"

namespace locreward {

/// (xi0, xi1, xi2): validity IoU, penalty threshold, full-reward threshold.
struct Thresholds {
  double xi0 = 0.5;
  double xi1 = 0.5;
  double xi2 = 0.75;

  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

enum class Phase {
  beginner,
  advanced,
};

inline std::string_view to_string(Phase p) noexcept { return p == Phase::beginner ? "beginner" : "advanced"; }

struct PhaseConfig {
  Thresholds beginner{0.5, 0.5, 0.75};
  Thresholds advanced{0.75, 0.75, 0.9};
  /// Fraction of training after which the advanced triple applies. 1 keeps the
  /// beginner triple for the whole run.
  double step_fraction = 0.5;

  void validate() const {
    const auto check = [](const Thresholds& t, const char* name) {
      const bool ok = std::isfinite(t.xi0) && std::isfinite(t.xi1) && std::isfinite(t.xi2) && t.xi0 > 0.0 &&
                      t.xi0 <= 1.0 && t.xi1 > 0.0 && t.xi1 <= t.xi2 && t.xi2 <= 1.0 && t.xi0 <= t.xi2;
      if (!ok) {
        throw Error(ErrorCode::invalid_config, std::string(name) + " thresholds need 0 < xi1 <= xi2 <= 1, "
                                                                   "0 < xi0 <= xi2");
      }
    };
    check(beginner, "beginner");
    check(advanced, "advanced");
    if (!(step_fraction > 0.0 && step_fraction <= 1.0))
      throw Error(ErrorCode::invalid_config, "step_fraction must lie in (0, 1]");
  }

  friend bool operator==(const PhaseConfig&, const PhaseConfig&) = default;
};

inline Phase active_phase(const PhaseConfig& cfg, double progress) {
  cfg.validate();
  if (!(progress >= 0.0 && progress <= 1.0)) throw Error(ErrorCode::invalid_config, "progress must lie in [0, 1]");
  // With step_fraction = 1 the advanced phase is never entered, not even at progress 1.
  if (cfg.step_fraction >= 1.0) return Phase::beginner;
  return progress < cfg.step_fraction ? Phase::beginner : Phase::advanced;
}

inline Thresholds phase_thresholds(const PhaseConfig& cfg, double progress) {
  return active_phase(cfg, progress) == Phase::beginner ? cfg.beginner : cfg.advanced;
}

/// 1 at or above xi2, 0 below xi1, identity in between.
inline double differentiate(double x, double xi1, double xi2) noexcept {
  if (x >= xi2) return 1.0;
  if (x < xi1) return 0.0;
  return x;
}

/// Switches for individual reward terms and the validity rule.
struct RewardOptions {
  bool require_label = true;
  bool use_dual_format = true;
  bool use_recall = true;
  bool use_precision = true;

  friend bool operator==(const RewardOptions&, const RewardOptions&) = default;
};

struct RewardBreakdown {
  double dual_format = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double total = 0.0;
  std::size_t m_predictions = 0;
  std::size_t n_gt = 0;
  std::size_t n_valid = 0;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

inline bool is_valid_match(const MatchedPrediction& m, double xi0, bool require_label = true) noexcept {
  return m.gt_index.has_value() && m.iou >= xi0 && (!require_label || m.label_correct);
}

inline std::size_t count_valid(std::span<const MatchedPrediction> matches, double xi0, bool require_label = true) {
  std::size_t n = 0;
  for (const auto& m : matches) n += is_valid_match(m, xi0, require_label) ? 1 : 0;
  return n;
}

inline double dual_format_reward(const ParseOutcome& outcome) noexcept {
  return outcome.template_ok && outcome.content_ok ? 1.0 : 0.0;
}

inline double recall_reward(std::span<const MatchedPrediction> matches, std::size_t n_gt, const Thresholds& t,
                            bool require_label = true) {
  if (n_gt == 0) return matches.empty() ? 1.0 : 0.0;
  const double raw = static_cast<double>(count_valid(matches, t.xi0, require_label)) / static_cast<double>(n_gt);
  return differentiate(raw, t.xi1, t.xi2);
}

inline double precision_reward(std::span<const MatchedPrediction> matches, std::size_t n_gt, const Thresholds& t,
                               bool require_label = true) {
  if (matches.empty()) return n_gt == 0 ? 1.0 : 0.0;
  double sum = 0.0;
  for (const auto& m : matches)
    if (is_valid_match(m, t.xi0, require_label)) sum += differentiate(m.iou, t.xi1, t.xi2);
  return sum / static_cast<double>(matches.size());
}

/// Rewards for an already matched completion.
inline RewardBreakdown score_matches(const ParseOutcome& outcome, std::span<const MatchedPrediction> matches,
                                     std::size_t n_gt, const Thresholds& t, const RewardOptions& options = {}) {
  RewardBreakdown r;
  r.m_predictions = matches.size();
  r.n_gt = n_gt;
  r.n_valid = count_valid(matches, t.xi0, options.require_label);
  r.dual_format = options.use_dual_format ? dual_format_reward(outcome) : 0.0;
  r.recall = options.use_recall ? recall_reward(matches, n_gt, t, options.require_label) : 0.0;
  r.precision = options.use_precision ? precision_reward(matches, n_gt, t, options.require_label) : 0.0;
  r.total = r.dual_format + r.recall + r.precision;
  return r;
}

/// Parses `text` (written in `completion_space`), converts the extracted boxes
/// into the ground-truth space, matches and scores under the thresholds active
/// at `progress`. Throws Error(space_mismatch) when the two spaces describe
/// different images.
inline RewardBreakdown score_completion(std::string_view text, const CompletionFormat& format,
                                        const CoordinateSpace& completion_space, const GroundTruthSet& gt,
                                        MatcherPolicy policy, const PhaseConfig& cfg, double progress,
                                        const RewardOptions& options = {}) {
  const Thresholds t = phase_thresholds(cfg, progress);
  if (!completion_space.same_image(gt.space))
    throw Error(ErrorCode::space_mismatch, "completion space and ground truth describe different images");
  const ParseOutcome outcome = parse_completion(text, format, completion_space);
  std::vector<LabeledBox> objects = extract_objects(outcome);
  for (auto& o : objects) o.box = to_space(o.box, completion_space, gt.space);
  const auto matches = match(objects, gt.space, gt, policy);
  return score_matches(outcome, matches, gt.size(), t, options);
}

}  // namespace locreward
