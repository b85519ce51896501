#pragma once

/// @file matching.hpp
/// @brief One-to-one assignment of predicted boxes to ground-truth instances.
///
/// The cost of pairing a prediction with a ground-truth instance is box-driven:
/// `1 - IoU`. The box-and-label policy adds a flat 1.0 when the normalized
/// labels differ, which outweighs any IoU difference. Assignment is solved
/// exactly, not greedily; predictions beyond |GT| stay unassigned with IoU 0.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "locreward/assignment.hpp"
#include "locreward/error.hpp"
#include "locreward/geometry.hpp"
#include "locreward/parsing.hpp"

namespace locreward {

struct GroundTruthSet {
  std::vector<LabeledBox> instances;
  CoordinateSpace space;

  std::size_t size() const noexcept { return instances.size(); }
  bool empty() const noexcept { return instances.empty(); }

  friend bool operator==(const GroundTruthSet&, const GroundTruthSet&) = default;
};

enum class MatcherPolicy {
  box_only,
  box_and_label,
};

struct MatchedPrediction {
  Box box;
  std::string label;
  double iou = 0.0;
  std::optional<std::size_t> gt_index;
  bool label_correct = false;

  friend bool operator==(const MatchedPrediction&, const MatchedPrediction&) = default;
};

inline constexpr double kLabelMismatchPenalty = 1.0;

inline double assignment_cost(const LabeledBox& pred, const LabeledBox& gt, MatcherPolicy policy) {
  double cost = 1.0 - iou(pred.box, gt.box);
  if (policy == MatcherPolicy::box_and_label && !labels_equal(pred.label, gt.label)) cost += kLabelMismatchPenalty;
  return cost;
}

/// Throws Error(space_mismatch) when the prediction space differs from the
/// ground-truth space, Error(invalid_box) for boxes outside their space.
inline std::vector<MatchedPrediction> match(std::span<const LabeledBox> predictions,
                                            const CoordinateSpace& prediction_space, const GroundTruthSet& gt,
                                            MatcherPolicy policy) {
  if (!(prediction_space == gt.space)) throw Error(ErrorCode::space_mismatch, "predictions and ground truth differ");
  for (const auto& p : predictions)
    if (auto c = validate_box(p.box, gt.space); !c) throw Error(ErrorCode::invalid_box, "prediction: " + c.reason);
  for (const auto& g : gt.instances)
    if (auto c = validate_box(g.box, gt.space); !c) throw Error(ErrorCode::invalid_box, "ground truth: " + c.reason);

  std::vector<MatchedPrediction> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) out.push_back({p.box, p.label, 0.0, std::nullopt, false});
  if (predictions.empty() || gt.empty()) return out;

  CostMatrix cost(predictions.size(), gt.size());
  for (std::size_t i = 0; i < predictions.size(); ++i)
    for (std::size_t j = 0; j < gt.size(); ++j) cost(i, j) = assignment_cost(predictions[i], gt.instances[j], policy);

  const auto assigned = solve_assignment(cost);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!assigned[i]) continue;
    const std::size_t j = *assigned[i];
    out[i].gt_index = j;
    out[i].iou = iou(predictions[i].box, gt.instances[j].box);
    out[i].label_correct = labels_equal(predictions[i].label, gt.instances[j].label);
  }
  return out;
}

/// Sum of pair costs over the assignment in prediction order.
namespace detail {

// Correctly rounded sum (Shewchuk partials), so the result does not depend on
// the order of the terms.
inline double exact_sum(std::span<const double> values) {
  std::vector<double> partials;
  for (double x : values) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  std::size_t n = partials.size() - 1;
  double hi = partials[n], lo = 0.0;
  while (n > 0) {
    const double x = hi, y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  // Round half-even across the remaining partials.
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0, x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

}  // namespace detail

/// Sum of the pair costs of the assigned predictions, correctly rounded.
inline double total_assignment_cost(std::span<const MatchedPrediction> matches, const GroundTruthSet& gt,
                                    MatcherPolicy policy) {
  std::vector<double> costs;
  for (const auto& m : matches) {
    if (!m.gt_index) continue;
    costs.push_back(assignment_cost({m.label, m.box}, gt.instances[*m.gt_index], policy));
  }
  return detail::exact_sum(costs);
}

}  // namespace locreward
