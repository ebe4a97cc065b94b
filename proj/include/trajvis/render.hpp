#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trajvis/image.hpp"
#include "trajvis/trajectory.hpp"
#include "trajvis/types.hpp"

namespace trajvis {

struct RenderStyle {
  std::array<std::uint8_t, 3> line_color{40, 110, 255};
  double line_width = 2.0;
  double point_radius = 3.0;
  bool draw_box = true;
  bool smooth = true;
  int smooth_window = 9;
  int smooth_order = 2;
  bool hide_points_in_box = true;
};

namespace detail {

inline void blend_pixel(ColorFrame& f, int x, int y,
                        const std::array<std::uint8_t, 3>& color, double alpha) {
  if (x < 0 || y < 0 || x >= f.width || y >= f.height || alpha <= 0.0) return;
  alpha = std::min(alpha, 1.0);
  std::uint8_t* px = f.pixel(x, y);
  for (int c = 0; c < 3; ++c)
    px[c] = static_cast<std::uint8_t>(
        std::lround((1.0 - alpha) * px[c] + alpha * color[c]));
}

inline double dist_to_segment(double px, double py, const Point2& a, const Point2& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (a.x + t * dx), py - (a.y + t * dy));
}

// Coverage-blended segment of the given stroke width.
inline void draw_segment(ColorFrame& f, const Point2& a, const Point2& b, double width,
                         const std::array<std::uint8_t, 3>& color) {
  const double r = 0.5 * width;
  const int x0 = static_cast<int>(std::floor(std::min(a.x, b.x) - r - 1.0));
  const int x1 = static_cast<int>(std::ceil(std::max(a.x, b.x) + r + 1.0));
  const int y0 = static_cast<int>(std::floor(std::min(a.y, b.y) - r - 1.0));
  const int y1 = static_cast<int>(std::ceil(std::max(a.y, b.y) + r + 1.0));
  for (int y = std::max(y0, 0); y <= std::min(y1, f.height - 1); ++y)
    for (int x = std::max(x0, 0); x <= std::min(x1, f.width - 1); ++x) {
      const double d = dist_to_segment(x + 0.5, y + 0.5, a, b);
      blend_pixel(f, x, y, color, r + 0.5 - d);
    }
}

inline void draw_dot(ColorFrame& f, const Point2& p, double radius,
                     const std::array<std::uint8_t, 3>& color) {
  const int x0 = static_cast<int>(std::floor(p.x - radius - 1.0));
  const int x1 = static_cast<int>(std::ceil(p.x + radius + 1.0));
  const int y0 = static_cast<int>(std::floor(p.y - radius - 1.0));
  const int y1 = static_cast<int>(std::ceil(p.y + radius + 1.0));
  for (int y = std::max(y0, 0); y <= std::min(y1, f.height - 1); ++y)
    for (int x = std::max(x0, 0); x <= std::min(x1, f.width - 1); ++x) {
      const double d = std::hypot(x + 0.5 - p.x, y + 0.5 - p.y);
      blend_pixel(f, x, y, color, radius + 0.5 - d);
    }
}

inline void draw_box_outline(ColorFrame& f, const BBox& b, double width,
                             const std::array<std::uint8_t, 3>& color) {
  const Point2 tl{b.x, b.y}, tr{b.x + b.w, b.y};
  const Point2 bl{b.x, b.y + b.h}, br{b.x + b.w, b.y + b.h};
  draw_segment(f, tl, tr, width, color);
  draw_segment(f, tr, br, width, color);
  draw_segment(f, br, bl, width, color);
  draw_segment(f, bl, tl, width, color);
}

}  // namespace detail

// Draws the trajectory polyline, point dots, and the current box outline on
// a copy of the input frame. Smoothing (when enabled) is display-only.
inline ColorFrame render_frame(const ColorFrame& f, const Trajectory& traj,
                               const BBox& box, const RenderStyle& style = {}) {
  ColorFrame out = f;

  std::vector<Point2> pts = style.smooth
                                ? smooth_for_render(traj, style.smooth_window,
                                                    style.smooth_order)
                                : [&] {
                                    std::vector<Point2> raw;
                                    raw.reserve(traj.size());
                                    for (const TrajPoint& tp : traj.points())
                                      raw.push_back(tp.p);
                                    return raw;
                                  }();
  if (style.hide_points_in_box) {
    std::vector<Point2> kept;
    kept.reserve(pts.size());
    for (const Point2& p : pts)
      if (!box.contains(p)) kept.push_back(p);
    pts = std::move(kept);
  }

  for (std::size_t i = 1; i < pts.size(); ++i)
    detail::draw_segment(out, pts[i - 1], pts[i], style.line_width, style.line_color);
  for (const Point2& p : pts) detail::draw_dot(out, p, style.point_radius, style.line_color);
  if (style.draw_box) detail::draw_box_outline(out, box, style.line_width, style.line_color);
  return out;
}

}  // namespace trajvis
