#pragma once

/// @file parsing.hpp
/// @brief Turns raw completion text into box predictions plus the template and
/// content flags consumed by the dual format reward.
///
/// Two grammars are supported (see docs/grammar.md):
///
///   structured  `[{"bbox_2d": [x1, y1, x2, y2], "label": "cat"}, ...]`, optionally
///               wrapped in a markdown code fence.
///   plain       `cat-[x1,y1,x2,y2];dog-[x1,y1,x2,y2]` with integer coordinates.
///
/// Template conformance covers the grammar of the whole completion. Content
/// conformance additionally requires every entry to carry a non-empty label and
/// a box that is valid in the declared space (and, for plain text, integer
/// coordinates). Entries that are well-formed are always kept in
/// `predictions`, even when content fails, so recall/precision can still be
/// scored.

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "locreward/geometry.hpp"

namespace locreward {

enum class FormatKind {
  structured_object_list,
  plain_text_pairs,
};

struct CompletionFormat {
  FormatKind kind = FormatKind::structured_object_list;

  static CompletionFormat structured() { return {FormatKind::structured_object_list}; }
  static CompletionFormat plain() { return {FormatKind::plain_text_pairs}; }

  /// Coordinate convention each grammar is emitted in by default.
  SpaceKind default_space() const noexcept {
    return kind == FormatKind::plain_text_pairs ? SpaceKind::normalized_thousandths : SpaceKind::absolute_pixels;
  }

  friend bool operator==(const CompletionFormat&, const CompletionFormat&) = default;
};

struct RawPrediction {
  std::string label;  // whitespace-normalized, original case
  std::array<double, 4> coords{};

  Box box() const noexcept { return {coords[0], coords[1], coords[2], coords[3]}; }

  friend bool operator==(const RawPrediction&, const RawPrediction&) = default;
};

struct LabeledBox {
  std::string label;
  Box box;

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

struct ParseOutcome {
  bool template_ok = false;
  bool content_ok = false;
  std::vector<RawPrediction> predictions;
  std::vector<std::string> diagnostics;
  CoordinateSpace space;

  friend bool operator==(const ParseOutcome&, const ParseOutcome&) = default;
};

/// Collapses whitespace runs to one space and trims both ends.
inline std::string normalize_label(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  bool pending_space = false;
  for (char c : label) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

/// Comparison key: normalized and ASCII case-folded.
inline std::string label_key(std::string_view label) {
  std::string out = normalize_label(label);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool labels_equal(std::string_view a, std::string_view b) { return label_key(a) == label_key(b); }

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Removes one surrounding ``` fence (with optional language tag) if present.
inline std::string_view strip_code_fence(std::string_view text) {
  text = trim(text);
  if (!text.starts_with("```")) return text;
  const auto first_newline = text.find('\n');
  if (first_newline == std::string_view::npos) return text;
  std::string_view body = text.substr(first_newline + 1);
  body = trim(body);
  if (body.ends_with("```")) body.remove_suffix(3);
  return trim(body);
}

// One entry's content check; appends diagnostics and returns whether the entry
// keeps content validity.
inline bool check_entry_content(const RawPrediction& p, const CoordinateSpace& space, std::size_t index,
                                std::vector<std::string>& diagnostics) {
  if (auto check = validate_box(p.box(), space); !check) {
    diagnostics.push_back("entry " + std::to_string(index) + ": " + check.reason);
    return false;
  }
  return true;
}

inline ParseOutcome parse_structured(std::string_view text, const CoordinateSpace& space) {
  ParseOutcome out;
  out.space = space;
  const std::string_view body = strip_code_fence(text);
  const nlohmann::json doc = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) {
    out.diagnostics.emplace_back("template: not a parseable JSON document");
    return out;
  }
  if (!doc.is_array()) {
    out.diagnostics.emplace_back("template: top level is not an array");
    return out;
  }
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& entry = doc[i];
    const std::string where = "template: entry " + std::to_string(i);
    if (!entry.is_object()) {
      out.diagnostics.push_back(where + " is not an object");
      return out;
    }
    const auto bbox = entry.find("bbox_2d");
    if (bbox == entry.end() || !bbox->is_array() || bbox->size() != 4) {
      out.diagnostics.push_back(where + " lacks a 4-element bbox_2d array");
      return out;
    }
    for (const auto& v : *bbox) {
      if (!v.is_number()) {
        out.diagnostics.push_back(where + " has a non-numeric coordinate");
        return out;
      }
    }
    const auto label = entry.find("label");
    if (label == entry.end() || !label->is_string()) {
      out.diagnostics.push_back(where + " lacks a string label");
      return out;
    }
  }
  out.template_ok = true;
  out.content_ok = true;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& entry = doc[i];
    RawPrediction p;
    p.label = normalize_label(entry["label"].get<std::string>());
    const auto& bbox = entry["bbox_2d"];
    bool finite = true;
    for (std::size_t k = 0; k < 4; ++k) {
      p.coords[k] = bbox[k].get<double>();
      finite = finite && std::isfinite(p.coords[k]);
    }
    if (p.label.empty()) {
      out.diagnostics.push_back("entry " + std::to_string(i) + ": empty label");
      out.content_ok = false;
      continue;
    }
    if (!finite) {
      out.diagnostics.push_back("entry " + std::to_string(i) + ": coordinate is not finite");
      out.content_ok = false;
      continue;
    }
    if (!check_entry_content(p, space, i, out.diagnostics)) out.content_ok = false;
    out.predictions.push_back(std::move(p));
  }
  return out;
}

// `-`? digits (`.` digits)?
inline bool parse_plain_number(std::string_view token, double& value, bool& integral) {
  token = trim(token);
  if (token.empty()) return false;
  std::size_t pos = 0;
  if (token[pos] == '-') ++pos;
  const std::size_t int_start = pos;
  while (pos < token.size() && std::isdigit(static_cast<unsigned char>(token[pos]))) ++pos;
  if (pos == int_start) return false;
  integral = true;
  if (pos < token.size() && token[pos] == '.') {
    ++pos;
    const std::size_t frac_start = pos;
    while (pos < token.size() && std::isdigit(static_cast<unsigned char>(token[pos]))) ++pos;
    if (pos == frac_start) return false;
    integral = false;
  }
  if (pos != token.size()) return false;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  return res.ec == std::errc{} && res.ptr == token.data() + token.size();
}

inline ParseOutcome parse_plain(std::string_view text, const CoordinateSpace& space) {
  ParseOutcome out;
  out.space = space;
  const std::string_view body = trim(text);
  struct Entry {
    RawPrediction pred;
    bool integral = true;
  };
  std::vector<Entry> entries;
  if (!body.empty()) {
    std::size_t start = 0;
    std::size_t index = 0;
    while (true) {
      const std::size_t end = body.find(';', start);
      const std::string_view segment = trim(body.substr(start, end == std::string_view::npos ? end : end - start));
      const std::string where = "template: segment " + std::to_string(index);
      const std::size_t open = segment.find('[');
      if (segment.empty() || open == std::string_view::npos || open == 0 || segment[open - 1] != '-' ||
          segment.back() != ']') {
        out.diagnostics.push_back(where + " is not of the form label-[x1,y1,x2,y2]");
        return out;
      }
      const std::string_view label = segment.substr(0, open - 1);
      if (label.find(']') != std::string_view::npos) {
        out.diagnostics.push_back(where + " has a bracket in its label");
        return out;
      }
      const std::string_view inner = segment.substr(open + 1, segment.size() - open - 2);
      Entry e;
      e.pred.label = normalize_label(label);
      if (e.pred.label.empty()) {
        out.diagnostics.push_back(where + " has an empty label");
        return out;
      }
      std::size_t tok_start = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t comma = inner.find(',', tok_start);
        const bool last = k == 3;
        if (last != (comma == std::string_view::npos)) {
          out.diagnostics.push_back(where + " does not have exactly four coordinates");
          return out;
        }
        const std::string_view tok = inner.substr(tok_start, last ? std::string_view::npos : comma - tok_start);
        bool integral = true;
        if (!parse_plain_number(tok, e.pred.coords[k], integral)) {
          out.diagnostics.push_back(where + " has a malformed number");
          return out;
        }
        e.integral = e.integral && integral;
        tok_start = comma + 1;
      }
      entries.push_back(std::move(e));
      if (end == std::string_view::npos) break;
      start = end + 1;
      ++index;
    }
  }
  out.template_ok = true;
  out.content_ok = true;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.integral) {
      out.diagnostics.push_back("entry " + std::to_string(i) + ": fractional coordinate");
      out.content_ok = false;
    }
    if (!check_entry_content(e.pred, space, i, out.diagnostics)) out.content_ok = false;
    out.predictions.push_back(std::move(e.pred));
  }
  return out;
}

}  // namespace detail

/// Never throws. `space` is the coordinate space the completion is expected to
/// be written in.
inline ParseOutcome parse_completion(std::string_view text, const CompletionFormat& format,
                                     const CoordinateSpace& space) {
  return format.kind == FormatKind::plain_text_pairs ? detail::parse_plain(text, space)
                                                     : detail::parse_structured(text, space);
}

/// Predictions whose boxes individually pass validate_box, in emission order.
inline std::vector<LabeledBox> extract_objects(const ParseOutcome& outcome) {
  std::vector<LabeledBox> out;
  if (!outcome.template_ok) return out;
  for (const auto& p : outcome.predictions) {
    if (validate_box(p.box(), outcome.space)) out.push_back({p.label, p.box()});
  }
  return out;
}

}  // namespace locreward
