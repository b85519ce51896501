#pragma once

/// @file grpo.hpp
/// @brief Group-relative advantages and the GRPO objective value.
///
/// Advantages standardize rewards inside one completion group:
///   A_i = (r_i - mean(r)) / (std(r) + eps), std with population (1/N)
///   normalization.
/// The objective averages ratio_i * A_i - beta * KL_i over the group, where
/// ratio_i = exp(sum log pi_theta - sum log pi_old) for the whole sequence.
/// Gradients are the trainer's business; this only evaluates J.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "locreward/error.hpp"

namespace locreward {

inline constexpr double kDefaultAdvantageEpsilon = 1e-4;
inline constexpr double kDefaultBeta = 0.2;
inline constexpr double kLogRatioClamp = 50.0;

struct LogProbRecord {
  std::vector<double> policy_logprobs;
  std::vector<double> old_logprobs;
  std::vector<double> ref_logprobs;

  /// Throws length_mismatch or non_finite_input.
  void validate() const {
    if (policy_logprobs.empty() || policy_logprobs.size() != old_logprobs.size() ||
        policy_logprobs.size() != ref_logprobs.size()) {
      throw Error(ErrorCode::length_mismatch, "log-prob lists must share one non-zero length");
    }
    for (const auto* list : {&policy_logprobs, &old_logprobs, &ref_logprobs})
      for (double v : *list)
        if (!std::isfinite(v) || v > 0.0) throw Error(ErrorCode::non_finite_input, "log-probs must be finite and <= 0");
  }

  friend bool operator==(const LogProbRecord&, const LogProbRecord&) = default;
};

enum class KlMode {
  per_token_k3,
  sequence_log_ratio,
};

inline std::string_view to_string(KlMode m) noexcept { return m == KlMode::per_token_k3 ? "k3" : "seq"; }

inline double population_mean(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double population_std(std::span<const double> xs) {
  const double mean = population_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

inline std::vector<double> group_advantages(std::span<const double> rewards,
                                            double epsilon = kDefaultAdvantageEpsilon) {
  if (rewards.size() < 2) throw Error(ErrorCode::group_too_small, "a group needs at least two completions");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_config, "epsilon must be positive");
  for (double r : rewards)
    if (!std::isfinite(r)) throw Error(ErrorCode::non_finite_input, "reward is not finite");
  std::vector<double> out(rewards.size(), 0.0);
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo == *hi) return out;
  const double mean = population_mean(rewards);
  const double denom = population_std(rewards) + epsilon;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / denom;
  return out;
}

/// k3: mean over tokens of exp(d) - d - 1 with d = ref - policy (always >= 0).
/// seq: sum(policy) - sum(ref).
inline double kl_estimate(const LogProbRecord& rec, KlMode mode = KlMode::per_token_k3) {
  rec.validate();
  const std::size_t n = rec.policy_logprobs.size();
  if (mode == KlMode::sequence_log_ratio) {
    double sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) sum += rec.policy_logprobs[t] - rec.ref_logprobs[t];
    return sum;
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double d = rec.ref_logprobs[t] - rec.policy_logprobs[t];
    sum += std::max(0.0, std::expm1(d) - d);
  }
  return sum / static_cast<double>(n);
}

struct ObjectiveOptions {
  double beta = kDefaultBeta;
  KlMode kl_mode = KlMode::per_token_k3;
  /// PPO-style ratio clipping half-width; off unless set.
  std::optional<double> clip;

  friend bool operator==(const ObjectiveOptions&, const ObjectiveOptions&) = default;
};

struct ObjectiveResult {
  double objective = 0.0;
  std::vector<double> ratios;
  std::vector<double> kl_values;
  /// Completions whose log-ratio had to be clamped to [-50, 50].
  std::size_t clamped_ratios = 0;
};

inline ObjectiveResult grpo_objective(std::span<const LogProbRecord> records, std::span<const double> advantages,
                                      const ObjectiveOptions& options = {}) {
  if (records.size() != advantages.size())
    throw Error(ErrorCode::length_mismatch, "one advantage per log-prob record is required");
  if (records.size() < 2) throw Error(ErrorCode::group_too_small, "a group needs at least two completions");
  if (!std::isfinite(options.beta) || options.beta < 0.0)
    throw Error(ErrorCode::invalid_config, "beta must be finite and >= 0");
  if (options.clip && !(*options.clip > 0.0 && *options.clip < 1.0))
    throw Error(ErrorCode::invalid_config, "clip must lie in (0, 1)");

  ObjectiveResult out;
  out.ratios.reserve(records.size());
  out.kl_values.reserve(records.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    rec.validate();
    if (!std::isfinite(advantages[i])) throw Error(ErrorCode::non_finite_input, "advantage is not finite");
    double log_ratio = 0.0;
    for (std::size_t t = 0; t < rec.policy_logprobs.size(); ++t)
      log_ratio += rec.policy_logprobs[t] - rec.old_logprobs[t];
    if (std::abs(log_ratio) > kLogRatioClamp) {
      log_ratio = std::clamp(log_ratio, -kLogRatioClamp, kLogRatioClamp);
      ++out.clamped_ratios;
    }
    const double ratio = std::exp(log_ratio);
    double surrogate = ratio * advantages[i];
    if (options.clip) {
      const double clipped = std::clamp(ratio, 1.0 - *options.clip, 1.0 + *options.clip);
      surrogate = std::min(surrogate, clipped * advantages[i]);
    }
    const double kl = kl_estimate(rec, options.kl_mode);
    out.ratios.push_back(ratio);
    out.kl_values.push_back(kl);
    sum += surrogate - options.beta * kl;
  }
  out.objective = sum / static_cast<double>(records.size());
  return out;
}

/// Rewards, advantages and (optionally) objective for one completion group.
struct GroupScore {
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::optional<double> objective;
  std::vector<double> kl_values;
  double beta = kDefaultBeta;
};

}  // namespace locreward
