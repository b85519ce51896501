#pragma once

// JSON form of a curated mixture: strata, shortages and one entry per selected
// sample with its rendered prompt.

#include <string>

#include "json.hpp"
#include "locreward/curation.hpp"
#include "locreward/harness/wire.hpp"

namespace locreward::harness {

inline json sample_to_json(const Sample& s, const MixtureSpec& spec, PromptStyle style) {
  json j = {{"sample_id", s.sample_id},
            {"task", to_string(s.task)},
            {"image_id", s.image_id},
            {"difficulty", to_string(classify_difficulty(s, spec.difficulty))},
            {"negative", s.is_negative},
            {"width", s.gt.space.width},
            {"height", s.gt.space.height},
            {"gt", objects_to_json(s.gt.instances)},
            {"prompt", render_prompt(s, style)}};
  if (s.task == Task::rec) j["expression"] = s.expression;
  else j["categories"] = s.categories;
  return j;
}

inline json mixture_to_json(const MixtureResult& result, const MixtureSpec& spec, PromptStyle style) {
  json strata = json::array();
  for (const auto& r : result.strata) {
    strata.push_back({{"task", to_string(r.task)},
                      {"target", r.target},
                      {"hard_target", r.hard_target},
                      {"negative_target", r.negative_target},
                      {"hard", r.hard},
                      {"easy", r.easy},
                      {"negative", r.negative},
                      {"synthesized_negatives", r.synthesized_negatives}});
  }
  json samples = json::array();
  for (const auto& s : result.samples) samples.push_back(sample_to_json(s, spec, style));
  return {{"v", kWireVersion},
          {"seed", spec.seed},
          {"style", to_string(style)},
          {"hard_fraction", spec.hard_fraction},
          {"negative_fraction", spec.negative_fraction},
          {"strata", strata},
          {"shortages", result.shortages},
          {"samples", samples}};
}

}  // namespace locreward::harness
