#pragma once

// Canonical emitters for both completion grammars. parse_completion() of the
// emitted text reproduces labels and coordinates exactly.

#include <charconv>
#include <span>
#include <string>

#include "json.hpp"
#include "locreward/parsing.hpp"

namespace locreward {

namespace detail {

// Shortest representation that round-trips; integral values print without a
// decimal point.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline std::string emit_completion(std::span<const LabeledBox> objects, const CompletionFormat& format) {
  std::string out;
  if (format.kind == FormatKind::plain_text_pairs) {
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& o = objects[i];
      if (i) out += ';';
      out += o.label;
      out += "-[";
      out += detail::format_number(o.box.x1) + ',' + detail::format_number(o.box.y1) + ',' +
             detail::format_number(o.box.x2) + ',' + detail::format_number(o.box.y2);
      out += ']';
    }
    return out;
  }
  out += '[';
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (i) out += ", ";
    out += "{\"bbox_2d\": [";
    out += detail::format_number(o.box.x1) + ", " + detail::format_number(o.box.y1) + ", " +
           detail::format_number(o.box.x2) + ", " + detail::format_number(o.box.y2);
    out += "], \"label\": ";
    out += nlohmann::json(o.label).dump();
    out += '}';
  }
  out += ']';
  return out;
}

}  // namespace locreward
