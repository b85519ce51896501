#pragma once

// Annotation files: one JSON object per line,
//   {"image_id":"img1","width":640,"height":480,
//    "instances":[{"label":"cat","bbox":[x1,y1,x2,y2]}],
//    "refs":[{"expression":"the left cat","instances":[0]}]}      (refs optional)
// Boxes are absolute pixels.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "locreward/annotation.hpp"
#include "locreward/harness/wire.hpp"

namespace locreward::harness {

inline AnnotatedImage annotation_from_json(const json& j) {
  constexpr auto code = ErrorCode::invalid_config;
  if (!j.is_object()) detail::bad(code, "annotation must be a JSON object");
  AnnotatedImage im;
  try {
    im.image_id = detail::get_id(detail::require(j, "image_id"), "image_id");
    im.width = detail::get_dimension(detail::require(j, "width"), "width");
    im.height = detail::get_dimension(detail::require(j, "height"), "height");
    im.instances = objects_from_json(detail::require(j, "instances"));
    if (auto refs = j.find("refs"); refs != j.end()) {
      if (!refs->is_array()) detail::bad(code, "refs must be an array");
      for (const auto& r : *refs) {
        Reference ref;
        ref.expression = detail::get_string(detail::require(r, "expression"), "expression", code);
        for (const auto& idx : detail::require(r, "instances")) {
          if (!idx.is_number_unsigned() && !idx.is_number_integer()) detail::bad(code, "ref instance must be an index");
          const auto v = idx.get<long long>();
          if (v < 0) detail::bad(code, "ref instance must be non-negative");
          ref.instances.push_back(static_cast<std::size_t>(v));
        }
        im.refs.push_back(std::move(ref));
      }
    }
  } catch (const Error& e) {
    if (e.code() == code) throw;
    detail::bad(code, e.what());
  }
  im.validate();
  return im;
}

inline json annotation_to_json(const AnnotatedImage& im) {
  json j = {{"image_id", im.image_id},
            {"width", im.width},
            {"height", im.height},
            {"instances", objects_to_json(im.instances)}};
  if (!im.refs.empty()) {
    json refs = json::array();
    for (const auto& r : im.refs) refs.push_back({{"expression", r.expression}, {"instances", r.instances}});
    j["refs"] = refs;
  }
  return j;
}

/// Parses annotation lines; the first bad line aborts with its line number.
inline std::vector<AnnotatedImage> read_annotations(std::istream& in, const std::string& name = "<stream>") {
  std::vector<AnnotatedImage> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line, nullptr, false);
    try {
      if (j.is_discarded()) detail::bad(ErrorCode::invalid_config, "not valid JSON");
      out.push_back(annotation_from_json(j));
    } catch (const Error& e) {
      throw Error(e.code(), name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<AnnotatedImage> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open annotation file " + path);
  return read_annotations(in, path);
}

inline std::vector<std::string> category_list(const std::vector<AnnotatedImage>& images) {
  std::vector<std::string> cats;
  std::map<std::string, bool> seen;
  for (const auto& im : images)
    for (const auto& inst : im.instances)
      if (!seen[label_key(inst.label)]) {
        seen[label_key(inst.label)] = true;
        cats.push_back(normalize_label(inst.label));
      }
  return cats;
}

struct ConvertReport {
  std::size_t images = 0;
  std::size_t instances = 0;
  std::size_t skipped_crowd = 0;
  std::size_t skipped_degenerate = 0;
  std::size_t clipped = 0;
};

/// Converts a COCO-layout instances document (images / annotations /
/// categories, bbox as [x, y, w, h]) into annotation records. Crowd regions and
/// boxes that are empty after clipping to the image are dropped.
inline std::vector<AnnotatedImage> convert_coco(const json& doc, ConvertReport* report = nullptr) {
  constexpr auto code = ErrorCode::invalid_config;
  ConvertReport rep;
  if (!doc.is_object()) detail::bad(code, "COCO document must be an object");
  std::map<long long, std::string> cat_names;
  for (const auto& c : detail::require(doc, "categories"))
    cat_names[detail::require(c, "id").get<long long>()] = detail::get_string(detail::require(c, "name"), "name", code);

  std::vector<AnnotatedImage> images;
  std::map<long long, std::size_t> index;
  for (const auto& im : detail::require(doc, "images")) {
    AnnotatedImage a;
    const long long id = detail::require(im, "id").get<long long>();
    a.image_id = std::to_string(id);
    a.width = detail::get_dimension(detail::require(im, "width"), "width");
    a.height = detail::get_dimension(detail::require(im, "height"), "height");
    index[id] = images.size();
    images.push_back(std::move(a));
  }
  for (const auto& ann : detail::require(doc, "annotations")) {
    const long long image = detail::require(ann, "image_id").get<long long>();
    auto it = index.find(image);
    if (it == index.end()) detail::bad(code, "annotation refers to unknown image " + std::to_string(image));
    if (auto crowd = ann.find("iscrowd"); crowd != ann.end() && crowd->is_number() && crowd->get<int>() != 0) {
      ++rep.skipped_crowd;
      continue;
    }
    auto& target = images[it->second];
    const auto& bbox = detail::require(ann, "bbox");
    if (!bbox.is_array() || bbox.size() != 4) detail::bad(code, "COCO bbox must be [x, y, w, h]");
    const double x = bbox[0].get<double>(), y = bbox[1].get<double>();
    const double w = bbox[2].get<double>(), h = bbox[3].get<double>();
    Box b{x, y, x + w, y + h};
    const Box clipped{std::clamp(b.x1, 0.0, double(target.width)), std::clamp(b.y1, 0.0, double(target.height)),
                      std::clamp(b.x2, 0.0, double(target.width)), std::clamp(b.y2, 0.0, double(target.height))};
    if (!(clipped == b)) ++rep.clipped;
    if (!validate_box(clipped, target.space())) {
      ++rep.skipped_degenerate;
      continue;
    }
    const long long cat = detail::require(ann, "category_id").get<long long>();
    auto name = cat_names.find(cat);
    if (name == cat_names.end()) detail::bad(code, "annotation refers to unknown category " + std::to_string(cat));
    target.instances.push_back({name->second, clipped});
    ++rep.instances;
  }
  rep.images = images.size();
  if (report) *report = rep;
  return images;
}

}  // namespace locreward::harness
