#pragma once

/// @file curation.hpp
/// @brief Training-sample selection: difficulty classification, seeded
/// stratified mixture sampling with negative samples, and prompt templates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "locreward/annotation.hpp"
#include "locreward/error.hpp"
#include "locreward/matching.hpp"
#include "locreward/parsing.hpp"

namespace locreward {

enum class Task : std::size_t {
  object_detection = 0,
  visual_grounding = 1,
  rec = 2,
};

inline constexpr std::array<Task, 3> kTasks{Task::object_detection, Task::visual_grounding, Task::rec};

inline std::string_view to_string(Task t) noexcept {
  switch (t) {
    case Task::object_detection: return "object-detection";
    case Task::visual_grounding: return "visual-grounding";
    case Task::rec: return "rec";
  }
  return "unknown";
}

inline Task parse_task(std::string_view s) {
  for (Task t : kTasks)
    if (s == to_string(t)) return t;
  throw Error(ErrorCode::invalid_config, "unknown task '" + std::string(s) + "'");
}

/// One training query. Detection queries carry a category list, grounding
/// queries a single category, REC queries a referring expression. `gt` holds
/// only the instances the query asks for.
struct Sample {
  std::string sample_id;
  Task task = Task::object_detection;
  std::string image_id;
  GroundTruthSet gt;
  std::vector<std::string> categories;
  std::string expression;
  bool is_negative = false;

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class Difficulty { easy, hard };

inline std::string_view to_string(Difficulty d) noexcept { return d == Difficulty::hard ? "hard" : "easy"; }

struct DifficultyRule {
  std::size_t instance_threshold = 10;
  /// Queries spanning more distinct categories than this also count as hard.
  std::size_t category_threshold = 5;
};

inline std::size_t query_category_count(const Sample& s) {
  if (s.task == Task::rec) {
    std::set<std::string> labels;
    for (const auto& g : s.gt.instances) labels.insert(label_key(g.label));
    return labels.size();
  }
  std::set<std::string> labels;
  for (const auto& c : s.categories) labels.insert(label_key(c));
  return labels.size();
}

inline Difficulty classify_difficulty(const Sample& s, const DifficultyRule& rule = {}) {
  if (s.gt.size() > rule.instance_threshold) return Difficulty::hard;
  if (query_category_count(s) > rule.category_threshold) return Difficulty::hard;
  return Difficulty::easy;
}

inline Difficulty classify_difficulty(const Sample& s, std::size_t instance_threshold) {
  DifficultyRule rule;
  rule.instance_threshold = instance_threshold;
  return classify_difficulty(s, rule);
}

/// Expands annotated images into candidate samples: one detection query per
/// non-empty image, one grounding query per category present, one REC query
/// per referring expression.
inline std::vector<Sample> build_corpus(std::span<const AnnotatedImage> images) {
  std::vector<Sample> out;
  for (const auto& im : images) {
    im.validate();
    std::vector<std::string> cats;
    std::set<std::string> seen;
    for (const auto& inst : im.instances)
      if (seen.insert(label_key(inst.label)).second) cats.push_back(normalize_label(inst.label));
    if (!im.instances.empty()) {
      out.push_back({"det:" + im.image_id, Task::object_detection, im.image_id, im.ground_truth(), cats, {}, false});
    }
    for (const auto& cat : cats) {
      GroundTruthSet gt{{}, im.space()};
      for (const auto& inst : im.instances)
        if (labels_equal(inst.label, cat)) gt.instances.push_back(inst);
      out.push_back({"vg:" + im.image_id + ":" + cat, Task::visual_grounding, im.image_id, gt, {cat}, {}, false});
    }
    for (std::size_t r = 0; r < im.refs.size(); ++r) {
      GroundTruthSet gt{{}, im.space()};
      for (std::size_t idx : im.refs[r].instances) gt.instances.push_back(im.instances[idx]);
      out.push_back({"rec:" + im.image_id + ":" + std::to_string(r), Task::rec, im.image_id, gt, {},
                     im.refs[r].expression, gt.empty()});
    }
  }
  return out;
}

struct MixtureSpec {
  /// Target sample count per task, indexed by Task.
  std::array<std::size_t, 3> counts{0, 0, 0};
  double hard_fraction = 0.5;
  DifficultyRule difficulty;
  /// Share of grounding and REC samples that are negative queries.
  double negative_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    const auto in_unit = [](double f) { return f >= 0.0 && f <= 1.0; };
    if (!in_unit(hard_fraction) || !in_unit(negative_fraction))
      throw Error(ErrorCode::invalid_config, "mixture fractions must lie in [0, 1]");
  }
};

struct StratumReport {
  Task task = Task::object_detection;
  std::size_t target = 0;
  std::size_t hard_target = 0;
  std::size_t negative_target = 0;
  std::size_t hard = 0;
  std::size_t easy = 0;
  std::size_t negative = 0;
  std::size_t synthesized_negatives = 0;
};

struct MixtureResult {
  std::vector<Sample> samples;
  std::vector<StratumReport> strata;
  std::vector<std::string> shortages;
};

namespace detail {

// Unbiased draw in [0, n) by rejection; std::uniform_int_distribution is
// implementation-defined and would make manifests differ across toolchains.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % bound);
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

inline std::size_t scaled_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
}

}  // namespace detail

/// Seeded stratified sample. Shortfalls in one difficulty class are reported,
/// not backfilled from another class. Missing negatives for grounding and REC
/// are synthesized by pairing an image with a category it does not contain.
inline MixtureResult sample_mixture(std::span<const Sample> corpus, const MixtureSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  MixtureResult result;

  // Per image: every label seen in any sample, and the image's space.
  std::map<std::string, std::set<std::string>> image_labels;
  std::map<std::string, CoordinateSpace> image_space;
  std::set<std::string> universe;
  std::map<std::string, std::string> display_name;
  for (const auto& s : corpus) {
    image_space.emplace(s.image_id, s.gt.space);
    auto& labels = image_labels[s.image_id];
    for (const auto& g : s.gt.instances) {
      labels.insert(label_key(g.label));
      universe.insert(label_key(g.label));
      display_name.emplace(label_key(g.label), normalize_label(g.label));
    }
  }

  for (Task task : kTasks) {
    const std::size_t n = spec.counts[static_cast<std::size_t>(task)];
    StratumReport rep;
    rep.task = task;
    rep.target = n;
    rep.hard_target = detail::scaled_count(n, spec.hard_fraction);
    rep.negative_target = task == Task::object_detection ? 0 : detail::scaled_count(n, spec.negative_fraction);
    if (rep.hard_target + rep.negative_target > n) rep.negative_target = n - rep.hard_target;
    const std::size_t easy_target = n - rep.hard_target - rep.negative_target;

    std::vector<const Sample*> hard, easy, negative;
    for (const auto& s : corpus) {
      if (s.task != task) continue;
      if (s.is_negative) negative.push_back(&s);
      else if (classify_difficulty(s, spec.difficulty) == Difficulty::hard) hard.push_back(&s);
      else easy.push_back(&s);
    }
    detail::seeded_shuffle(hard, rng);
    detail::seeded_shuffle(easy, rng);
    detail::seeded_shuffle(negative, rng);

    std::vector<Sample> picked;
    const auto take = [&](const std::vector<const Sample*>& pool, std::size_t want) {
      const std::size_t got = std::min(want, pool.size());
      for (std::size_t i = 0; i < got; ++i) picked.push_back(*pool[i]);
      return got;
    };
    rep.hard = take(hard, rep.hard_target);
    rep.easy = take(easy, easy_target);
    rep.negative = take(negative, rep.negative_target);

    if (rep.negative < rep.negative_target) {
      std::set<std::string> used;
      for (const auto& s : picked) used.insert(s.sample_id);
      std::vector<std::pair<std::string, std::string>> candidates;
      for (const auto& [image_id, labels] : image_labels)
        for (const auto& cat : universe)
          if (!labels.count(cat)) candidates.emplace_back(image_id, cat);
      detail::seeded_shuffle(candidates, rng);
      const std::string prefix = task == Task::rec ? "neg-rec:" : "neg-vg:";
      for (const auto& [image_id, cat] : candidates) {
        if (rep.negative >= rep.negative_target) break;
        Sample s;
        s.sample_id = prefix + image_id + ":" + display_name[cat];
        if (used.count(s.sample_id)) continue;
        s.task = task;
        s.image_id = image_id;
        s.gt = {{}, image_space[image_id]};
        if (task == Task::rec) s.expression = display_name[cat];
        else s.categories = {display_name[cat]};
        s.is_negative = true;
        used.insert(s.sample_id);
        picked.push_back(std::move(s));
        ++rep.negative;
        ++rep.synthesized_negatives;
      }
    }

    const auto note = [&](std::string_view what, std::size_t want, std::size_t got) {
      if (got < want) {
        result.shortages.push_back(std::string(to_string(task)) + ": " + std::string(what) + " wanted " +
                                   std::to_string(want) + ", got " + std::to_string(got));
      }
    };
    note("hard", rep.hard_target, rep.hard);
    note("easy", easy_target, rep.easy);
    note("negative", rep.negative_target, rep.negative);

    detail::seeded_shuffle(picked, rng);
    for (auto& s : picked) result.samples.push_back(std::move(s));
    result.strata.push_back(rep);
  }
  return result;
}

enum class PromptStyle {
  griffon_g,
  structured_coordinates,
};

inline std::string_view to_string(PromptStyle s) noexcept {
  return s == PromptStyle::griffon_g ? "griffon-g" : "structured-coordinates";
}

inline PromptStyle parse_prompt_style(std::string_view s) {
  if (s == "griffon-g") return PromptStyle::griffon_g;
  if (s == "structured-coordinates" || s == "structured") return PromptStyle::structured_coordinates;
  throw Error(ErrorCode::unknown_style, "unknown prompt style '" + std::string(s) + "'");
}

inline std::string join_categories(std::span<const std::string> cats) {
  std::string out;
  for (std::size_t i = 0; i < cats.size(); ++i) {
    if (i) out += ", ";
    out += cats[i];
  }
  return out;
}

/// Fills the instruction template for the sample's task and model style.
inline std::string render_prompt(const Sample& s, PromptStyle style) {
  const std::string category = s.categories.empty() ? std::string{} : s.categories.front();
  switch (style) {
    case PromptStyle::griffon_g:
      switch (s.task) {
        case Task::object_detection:
          return "Examine the image for any objects from the category set. Report the coordinates of each "
                 "detected object. The category set includes " + join_categories(s.categories) + ".";
        case Task::visual_grounding:
          return "Locate the exact position of " + category + " in the picture, if you can.";
        case Task::rec:
          return "Can you point out " + s.expression +
                 " in the image and provide the coordinates of its location?";
      }
      break;
    case PromptStyle::structured_coordinates:
      switch (s.task) {
        case Task::object_detection:
          return "Locate every item from the category list in the image and output the coordinates in JSON "
                 "format. The category set includes " + join_categories(s.categories) + ".";
        case Task::visual_grounding:
          return "Locate every " + category + " in the image and output the coordinates in JSON format.";
        case Task::rec:
          return "Locate every " + s.expression + " in the image and output the coordinates in JSON format.";
      }
      break;
  }
  throw Error(ErrorCode::unknown_style, "no template for this task/style combination");
}

inline std::string render_prompt(const Sample& s, std::string_view style) {
  return render_prompt(s, parse_prompt_style(style));
}

}  // namespace locreward
