#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "locreward/error.hpp"
#include "locreward/geometry.hpp"
#include "locreward/matching.hpp"
#include "locreward/parsing.hpp"

namespace locreward {

/// A referring expression that points at a subset of an image's instances.
struct Reference {
  std::string expression;
  std::vector<std::size_t> instances;

  friend bool operator==(const Reference&, const Reference&) = default;
};

/// One annotated image; boxes are in absolute pixels.
struct AnnotatedImage {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<LabeledBox> instances;
  std::vector<Reference> refs;

  CoordinateSpace space() const { return CoordinateSpace::pixels(width, height); }
  GroundTruthSet ground_truth() const { return {instances, space()}; }

  void validate() const {
    if (image_id.empty()) throw Error(ErrorCode::invalid_config, "image_id is empty");
    if (width < 1 || height < 1) throw Error(ErrorCode::invalid_config, image_id + ": width/height must be >= 1");
    for (const auto& inst : instances) {
      if (normalize_label(inst.label).empty()) throw Error(ErrorCode::invalid_config, image_id + ": empty label");
      if (auto c = validate_box(inst.box, space()); !c) throw Error(ErrorCode::invalid_box, image_id + ": " + c.reason);
    }
    for (const auto& ref : refs)
      for (std::size_t i : ref.instances)
        if (i >= instances.size()) throw Error(ErrorCode::invalid_config, image_id + ": ref instance out of range");
  }

  friend bool operator==(const AnnotatedImage&, const AnnotatedImage&) = default;
};

}  // namespace locreward
