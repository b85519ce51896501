#pragma once

/// @file geometry.hpp
/// @brief Axis-aligned boxes, coordinate spaces and IoU.
///
/// Boxes are continuous rectangles: area = (x2 - x1) * (y2 - y1) with no
/// +1 pixel correction. Two boxes that only share an edge have IoU 0.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "locreward/error.hpp"

namespace locreward {

enum class SpaceKind {
  absolute_pixels,
  normalized_thousandths,
};

/// The frame a box's coordinates live in. Width and height always describe the
/// underlying image, even when coordinates are expressed in thousandths.
struct CoordinateSpace {
  SpaceKind kind = SpaceKind::absolute_pixels;
  int width = 1;
  int height = 1;

  static constexpr double kThousandths = 1000.0;

  static CoordinateSpace pixels(int w, int h) { return {SpaceKind::absolute_pixels, w, h}; }
  static CoordinateSpace thousandths(int w, int h) { return {SpaceKind::normalized_thousandths, w, h}; }

  bool valid() const noexcept { return width >= 1 && height >= 1; }

  double x_extent() const noexcept {
    return kind == SpaceKind::normalized_thousandths ? kThousandths : static_cast<double>(width);
  }
  double y_extent() const noexcept {
    return kind == SpaceKind::normalized_thousandths ? kThousandths : static_cast<double>(height);
  }

  bool same_image(const CoordinateSpace& other) const noexcept {
    return width == other.width && height == other.height;
  }

  friend bool operator==(const CoordinateSpace&, const CoordinateSpace&) = default;
};

struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }

  friend bool operator==(const Box&, const Box&) = default;
};

enum class BoxFault {
  none,
  invalid_space,
  non_finite,
  x_order,  // x2 <= x1
  y_order,  // y2 <= y1
  negative,
  exceeds_width,
  exceeds_height,
};

struct BoxCheck {
  bool ok = true;
  BoxFault fault = BoxFault::none;
  std::string reason;

  explicit operator bool() const noexcept { return ok; }
};

namespace detail {

inline BoxCheck fail(BoxFault fault, std::string reason) { return {false, fault, std::move(reason)}; }

// Checks that do not depend on a coordinate space, in reporting order.
inline BoxCheck check_intrinsic(const Box& b) {
  if (!std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) || !std::isfinite(b.y2)) {
    return fail(BoxFault::non_finite, "coordinate is not finite");
  }
  if (!(b.x1 < b.x2)) return fail(BoxFault::x_order, "x2 <= x1");
  if (!(b.y1 < b.y2)) return fail(BoxFault::y_order, "y2 <= y1");
  if (b.x1 < 0.0 || b.y1 < 0.0) return fail(BoxFault::negative, "negative coordinate");
  return {};
}

}  // namespace detail

/// Never throws; the reason names the first violated invariant.
inline BoxCheck validate_box(const Box& b, const CoordinateSpace& space) {
  if (!space.valid()) return detail::fail(BoxFault::invalid_space, "space width/height must be >= 1");
  if (auto check = detail::check_intrinsic(b); !check) return check;
  if (b.x2 > space.x_extent()) return detail::fail(BoxFault::exceeds_width, "x2 exceeds space width");
  if (b.y2 > space.y_extent()) return detail::fail(BoxFault::exceeds_height, "y2 exceeds space height");
  return {};
}

inline double intersection_area(const Box& a, const Box& b) noexcept {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

/// Intersection over union. Throws Error(invalid_box) when either box is
/// degenerate, negative or non-finite.
inline double iou(const Box& a, const Box& b) {
  if (auto check = detail::check_intrinsic(a); !check) throw Error(ErrorCode::invalid_box, check.reason);
  if (auto check = detail::check_intrinsic(b); !check) throw Error(ErrorCode::invalid_box, check.reason);
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  if (a == b) return 1.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Linear rescale between pixel and thousandths conventions of the same image.
inline Box to_space(const Box& b, const CoordinateSpace& from, const CoordinateSpace& to) {
  if (!from.same_image(to)) throw Error(ErrorCode::invalid_box, "spaces describe different images");
  if (auto check = validate_box(b, from); !check) throw Error(ErrorCode::invalid_box, check.reason);
  if (from.kind == to.kind) return b;
  const auto sx = [&](double v) { return v * to.x_extent() / from.x_extent(); };
  const auto sy = [&](double v) { return v * to.y_extent() / from.y_extent(); };
  Box out{sx(b.x1), sy(b.y1), sx(b.x2), sy(b.y2)};
  // Rounding may push the far edge a hair past the extent.
  out.x2 = std::min(out.x2, to.x_extent());
  out.y2 = std::min(out.y2, to.y_extent());
  return out;
}

}  // namespace locreward
