#pragma once

/// @file metrics.hpp
/// @brief COCO-style detection metrics (mAP@[.5:.95], AP50, AP75, AR@100) for
/// score-less predictions.
///
/// Language-model detections carry no confidence, so every detection scores
/// 1.0 and ranks by emission order; across images the rank follows dataset
/// order. Within an image a detection claims the unmatched ground truth of its
/// category with the highest IoU (ties go to the later instance), as the
/// reference COCO evaluator does. AP uses 101-point interpolation; categories
/// without ground truth are left out of the average. The 100-detection cap is
/// applied per image and category.

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "locreward/error.hpp"
#include "locreward/geometry.hpp"
#include "locreward/matching.hpp"
#include "locreward/parsing.hpp"

namespace locreward {

struct EvalImage {
  std::string image_id;
  GroundTruthSet gt;
};

struct EvalDataset {
  std::vector<EvalImage> images;
  std::vector<std::string> categories;

  void validate() const {
    std::unordered_map<std::string, int> seen;
    for (const auto& im : images)
      if (seen[im.image_id]++ > 0) throw Error(ErrorCode::invalid_config, "duplicate image id " + im.image_id);
    std::unordered_map<std::string, int> cats;
    for (const auto& c : categories) cats[label_key(c)] = 1;
    for (const auto& im : images)
      for (const auto& g : im.gt.instances)
        if (!cats.count(label_key(g.label)))
          throw Error(ErrorCode::invalid_config, "ground-truth label '" + g.label + "' not in category list");
  }
};

struct EvalResult {
  std::vector<std::pair<double, double>> ap_per_iou;  // (threshold, AP)
  double map_5095 = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ar100 = 0.0;
  std::size_t unknown_category_predictions = 0;
  std::vector<std::string> diagnostics;
};

struct DetectionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  friend bool operator==(const DetectionCounts&, const DetectionCounts&) = default;
};

inline constexpr std::size_t kMaxDetections = 100;
inline constexpr std::size_t kRecallPoints = 101;

/// 0.50, 0.55, ..., 0.95 computed as start + i * step, which reproduces the
/// reference evaluator's threshold values bit for bit.
inline std::array<double, 10> coco_iou_thresholds() {
  std::array<double, 10> t{};
  const double step = (0.95 - 0.5) / 9.0;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) * step + 0.5;
  t.back() = 0.95;
  return t;
}

namespace detail {

// Greedy per-detection matching. Returns, for each detection, whether it found
// a ground-truth partner.
inline std::vector<char> greedy_match(std::span<const Box> dets, std::span<const Box> gts, double threshold) {
  std::vector<char> matched(dets.size(), 0);
  std::vector<char> taken(gts.size(), 0);
  const double floor = std::min(threshold, 1.0 - 1e-10);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = floor;
    std::ptrdiff_t m = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(dets[d], gts[g]);
      if (v < best) continue;
      best = v;
      m = static_cast<std::ptrdiff_t>(g);
    }
    if (m >= 0) {
      taken[static_cast<std::size_t>(m)] = 1;
      matched[d] = 1;
    }
  }
  return matched;
}

}  // namespace detail

/// Label-aware greedy matching in emission order; each ground truth is consumed
/// at most once. Unknown labels simply never match.
inline DetectionCounts per_image_counts(std::span<const LabeledBox> predictions, const GroundTruthSet& gt,
                                        double iou_threshold) {
  std::map<std::string, std::vector<Box>> by_label;
  for (const auto& g : gt.instances) by_label[label_key(g.label)].push_back(g.box);
  std::map<std::string, std::vector<Box>> dets;
  for (const auto& p : predictions) dets[label_key(p.label)].push_back(p.box);
  DetectionCounts c;
  for (const auto& [key, boxes] : dets) {
    auto it = by_label.find(key);
    if (it == by_label.end()) {
      c.fp += boxes.size();
      continue;
    }
    const auto matched = detail::greedy_match(boxes, it->second, iou_threshold);
    for (char m : matched) (m ? c.tp : c.fp) += 1;
  }
  c.fn = gt.size() - c.tp;
  return c;
}

/// `predictions[i]` belongs to `dataset.images[i]`.
inline EvalResult evaluate(std::span<const std::vector<LabeledBox>> predictions, const EvalDataset& dataset) {
  dataset.validate();
  if (predictions.size() != dataset.images.size())
    throw Error(ErrorCode::length_mismatch, "one prediction list per dataset image is required");

  std::unordered_map<std::string, std::size_t> cat_index;
  for (const auto& c : dataset.categories) cat_index.emplace(label_key(c), cat_index.size());
  const std::size_t n_cat = dataset.categories.size();
  const std::size_t n_img = dataset.images.size();

  EvalResult result;
  // Per image, per category: ground-truth boxes and (capped) detection boxes.
  std::vector<std::vector<std::vector<Box>>> gts(n_img, std::vector<std::vector<Box>>(n_cat));
  std::vector<std::vector<std::vector<Box>>> dts(n_img, std::vector<std::vector<Box>>(n_cat));
  std::vector<std::size_t> npig(n_cat, 0);
  for (std::size_t i = 0; i < n_img; ++i) {
    const auto& image = dataset.images[i];
    for (const auto& g : image.gt.instances) {
      const std::size_t k = cat_index.at(label_key(g.label));
      gts[i][k].push_back(g.box);
      ++npig[k];
    }
    for (const auto& p : predictions[i]) {
      if (auto v = validate_box(p.box, image.gt.space); !v)
        throw Error(ErrorCode::invalid_box, "prediction on image " + image.image_id + ": " + v.reason);
      auto it = cat_index.find(label_key(p.label));
      if (it == cat_index.end()) {
        ++result.unknown_category_predictions;
        continue;
      }
      auto& bucket = dts[i][it->second];
      if (bucket.size() < kMaxDetections) bucket.push_back(p.box);
    }
  }
  if (result.unknown_category_predictions > 0) {
    result.diagnostics.push_back(std::to_string(result.unknown_category_predictions) +
                                 " prediction(s) with labels outside the category list counted as false positives");
  }

  std::size_t evaluated_categories = 0;
  for (std::size_t k = 0; k < n_cat; ++k) evaluated_categories += npig[k] > 0 ? 1 : 0;
  const auto thresholds = coco_iou_thresholds();
  if (evaluated_categories == 0) {
    result.diagnostics.emplace_back("no category has ground truth; metrics reported as 0");
    for (double t : thresholds) result.ap_per_iou.emplace_back(t, 0.0);
    return result;
  }

  double recall_sum = 0.0;
  double map_sum = 0.0;
  for (double t : thresholds) {
    double ap_sum = 0.0;
    for (std::size_t k = 0; k < n_cat; ++k) {
      if (npig[k] == 0) continue;
      std::vector<char> flags;
      for (std::size_t i = 0; i < n_img; ++i) {
        const auto m = detail::greedy_match(dts[i][k], gts[i][k], t);
        flags.insert(flags.end(), m.begin(), m.end());
      }
      const std::size_t nd = flags.size();
      std::vector<double> rc(nd), pr(nd);
      double tp = 0.0, fp = 0.0;
      for (std::size_t d = 0; d < nd; ++d) {
        (flags[d] ? tp : fp) += 1.0;
        rc[d] = tp / static_cast<double>(npig[k]);
        pr[d] = tp / (tp + fp + std::numeric_limits<double>::epsilon());
      }
      recall_sum += nd ? rc.back() : 0.0;
      for (std::size_t d = nd; d-- > 1;)
        if (pr[d] > pr[d - 1]) pr[d - 1] = pr[d];
      double q_sum = 0.0;
      std::size_t pi = 0;
      for (std::size_t r = 0; r < kRecallPoints; ++r) {
        const double thr = r + 1 == kRecallPoints ? 1.0 : static_cast<double>(r) * 0.01;
        while (pi < nd && rc[pi] < thr) ++pi;
        if (pi >= nd) break;
        q_sum += pr[pi];
      }
      ap_sum += q_sum / static_cast<double>(kRecallPoints);
    }
    const double ap = ap_sum / static_cast<double>(evaluated_categories);
    result.ap_per_iou.emplace_back(t, ap);
    map_sum += ap;
  }
  result.map_5095 = map_sum / static_cast<double>(thresholds.size());
  result.ap50 = result.ap_per_iou[0].second;
  result.ap75 = result.ap_per_iou[5].second;
  result.ar100 = recall_sum / static_cast<double>(thresholds.size() * evaluated_categories);
  return result;
}

}  // namespace locreward
