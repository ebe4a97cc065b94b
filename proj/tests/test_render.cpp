#include "trajvis/render.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "trajvis/geometry.hpp"
#include "trajvis/image.hpp"
#include "trajvis/trajectory.hpp"

using namespace trajvis;

namespace {

ColorFrame gray_frame(int w, int h, std::uint8_t v) {
  ColorFrame f(w, h, v);
  return f;
}

bool pixel_equals(const ColorFrame& f, int x, int y, std::uint8_t v) {
  const std::uint8_t* p = f.pixel(x, y);
  return p[0] == v && p[1] == v && p[2] == v;
}

}  // namespace

TEST(RenderFrame, InputNotMutated) {
  const ColorFrame f = gray_frame(100, 80, 120);
  Trajectory traj(100, 80);
  traj.append_current({20.0, 40.0});
  traj.propagate(Homography::identity());
  traj.append_current({70.0, 40.0});
  const ColorFrame before = f;
  render_frame(f, traj, {10, 10, 20, 20}, {});
  EXPECT_EQ(f.data, before.data);
}

TEST(RenderFrame, EmptyTrajectoryOnlyBoxDrawn) {
  const ColorFrame f = gray_frame(100, 80, 120);
  const Trajectory traj(100, 80);

  RenderStyle no_box;
  no_box.draw_box = false;
  const ColorFrame plain = render_frame(f, traj, {10, 10, 20, 20}, no_box);
  EXPECT_EQ(plain.data, f.data);

  RenderStyle with_box;
  with_box.draw_box = true;
  const ColorFrame boxed = render_frame(f, traj, {10, 10, 20, 20}, with_box);
  EXPECT_NE(boxed.data, f.data);
}

TEST(RenderFrame, HorizontalLineBandOnly) {
  const ColorFrame f = gray_frame(120, 60, 200);
  Trajectory traj(120, 60);
  traj.append_current({20.0, 30.0});
  traj.propagate(Homography::identity());
  traj.append_current({100.0, 30.0});

  RenderStyle style;
  style.draw_box = false;
  style.smooth = false;
  style.hide_points_in_box = false;
  style.line_width = 1;
  style.point_radius = 1;
  const ColorFrame out = render_frame(f, traj, {0, 0, 1, 1}, style);

  int touched_rows_lo = 60, touched_rows_hi = -1;
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 120; ++x)
      if (!pixel_equals(out, x, y, 200)) {
        touched_rows_lo = std::min(touched_rows_lo, y);
        touched_rows_hi = std::max(touched_rows_hi, y);
      }
  // Drawing stays within a +-2 px anti-alias band around the row.
  EXPECT_GE(touched_rows_lo, 28);
  EXPECT_LE(touched_rows_hi, 32);
  // The connecting row itself is recolored between the endpoints.
  for (int x = 30; x <= 90; ++x) EXPECT_FALSE(pixel_equals(out, x, 30, 200));
}

TEST(RenderFrame, PurityOutsideDrawnRegion) {
  const ColorFrame f = gray_frame(200, 150, 90);
  Trajectory traj(200, 150);
  traj.append_current({30.0, 30.0});
  traj.propagate(Homography::identity());
  traj.append_current({60.0, 45.0});

  RenderStyle style;
  style.draw_box = false;
  style.smooth = false;
  style.hide_points_in_box = false;
  const ColorFrame out = render_frame(f, traj, {0, 0, 1, 1}, style);

  // Far corner untouched by a segment confined to the upper-left region.
  for (int y = 100; y < 150; ++y)
    for (int x = 100; x < 200; ++x) EXPECT_TRUE(pixel_equals(out, x, y, 90));
}

TEST(RenderFrame, HidePointsInsideBox) {
  const ColorFrame f = gray_frame(100, 100, 50);
  Trajectory traj(100, 100);
  traj.append_current({48.0, 48.0});
  traj.propagate(Homography::identity());
  traj.append_current({52.0, 52.0});

  RenderStyle style;
  style.draw_box = false;
  style.smooth = false;
  style.hide_points_in_box = true;
  const ColorFrame out = render_frame(f, traj, {40, 40, 20, 20}, style);
  EXPECT_EQ(out.data, f.data);  // every point hidden, nothing to draw
}

TEST(RenderFrame, BoxOutlineCorners) {
  const ColorFrame f = gray_frame(100, 100, 255);
  const Trajectory traj(100, 100);
  RenderStyle style;
  style.draw_box = true;
  style.line_width = 1;
  const ColorFrame out = render_frame(f, traj, {20, 30, 40, 30}, style);
  EXPECT_FALSE(pixel_equals(out, 20, 30, 255));
  EXPECT_FALSE(pixel_equals(out, 60, 30, 255));
  EXPECT_FALSE(pixel_equals(out, 20, 60, 255));
  // Interior stays untouched.
  EXPECT_TRUE(pixel_equals(out, 40, 45, 255));
}

TEST(RenderFrame, SmoothingIsDisplayOnly) {
  const ColorFrame f = gray_frame(300, 200, 10);
  Trajectory traj(300, 200);
  Rng rng(3);
  traj.append_current({20.0, 100.0});
  for (int t = 1; t < 30; ++t) {
    traj.propagate(Homography::identity());
    traj.append_current({20.0 + 9.0 * t, 100.0 + rng.uniform(-20.0, 20.0)});
  }
  const std::size_t n_before = traj.size();
  const Point2 p_before = traj.points()[5].p;

  RenderStyle style;
  style.smooth = true;
  style.draw_box = false;
  render_frame(f, traj, {0, 0, 1, 1}, style);

  EXPECT_EQ(traj.size(), n_before);
  EXPECT_EQ(traj.points()[5].p.x, p_before.x);
  EXPECT_EQ(traj.points()[5].p.y, p_before.y);
}
