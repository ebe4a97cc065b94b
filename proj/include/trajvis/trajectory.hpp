#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "trajvis/geometry.hpp"
#include "trajvis/types.hpp"

namespace trajvis {

struct InvalidK : std::runtime_error {
  InvalidK() : std::runtime_error("anchor fraction k must be in [0, 1]") {}
};

struct OutOfBounds : std::runtime_error {
  OutOfBounds() : std::runtime_error("point outside frame bounds") {}
};

struct InvalidParams : std::runtime_error {
  explicit InvalidParams(const std::string& what) : std::runtime_error(what) {}
};

// Anchor under the athlete: horizontal box center, k of the way down the box
// (k = 0.9 puts it near the skis, k = 0.5 at the box center).
inline Point2 extract_anchor(const BBox& b, double k = 0.9) {
  if (k < 0.0 || k > 1.0) throw InvalidK();
  return {b.x + 0.5 * b.w, b.y + k * b.h};
}

// Pulls a point into the half-open frame rectangle. Used for anchors whose
// box sticks out of the frame; the margin keeps three-decimal output inside
// the printed bounds too.
inline Point2 clamp_into_frame(Point2 p, int w, int h) {
  const double margin = 1e-3;
  p.x = std::clamp(p.x, 0.0, w - margin);
  p.y = std::clamp(p.y, 0.0, h - margin);
  return p;
}

struct TrajPoint {
  int origin_frame = 0;  // frame at which the point was created
  Point2 p;              // position in the current frame's coordinates
};

// The per-frame point set traversed by the target, all expressed in the
// current frame. Points leaving the frame are dropped for good.
class Trajectory {
 public:
  Trajectory(int frame_w, int frame_h)
      : frame_w_(frame_w), frame_h_(frame_h) {
    if (frame_w <= 0 || frame_h <= 0)
      throw InvalidParams("frame dimensions must be positive");
  }

  const std::vector<TrajPoint>& points() const { return points_; }
  int frame_index() const { return frame_index_; }
  int frame_w() const { return frame_w_; }
  int frame_h() const { return frame_h_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  // Maps every point into the next frame and drops the ones that land
  // outside it (or at infinity). Advances the frame index.
  void propagate(const Homography& h, int new_w, int new_h) {
    std::vector<TrajPoint> kept;
    kept.reserve(points_.size());
    for (const TrajPoint& tp : points_) {
      const auto q = detail::apply_checked(h, tp.p);
      if (!q || !q->finite()) continue;
      if (q->x < 0.0 || q->x >= new_w || q->y < 0.0 || q->y >= new_h) continue;
      kept.push_back({tp.origin_frame, *q});
    }
    points_ = std::move(kept);
    frame_w_ = new_w;
    frame_h_ = new_h;
    ++frame_index_;
  }

  void propagate(const Homography& h) { propagate(h, frame_w_, frame_h_); }

  // Appends the current frame's anchor. At most one point per frame.
  void append_current(const Point2& p) {
    if (!p.finite() || p.x < 0.0 || p.x >= frame_w_ || p.y < 0.0 || p.y >= frame_h_)
      throw OutOfBounds();
    if (!points_.empty() && points_.back().origin_frame >= frame_index_)
      throw std::logic_error("append_current called twice for one frame");
    points_.push_back({frame_index_, p});
  }

  bool invariants_hold() const {
    int last_origin = -1;
    for (const TrajPoint& tp : points_) {
      if (!tp.p.finite()) return false;
      if (tp.p.x < 0.0 || tp.p.x >= frame_w_ || tp.p.y < 0.0 || tp.p.y >= frame_h_)
        return false;
      if (tp.origin_frame <= last_origin || tp.origin_frame > frame_index_)
        return false;
      last_origin = tp.origin_frame;
    }
    return true;
  }

  // Rebuilds state from stored points (re-rendering saved records). Origins
  // must be strictly increasing; bounds are not re-checked because record
  // files round coordinates.
  static Trajectory restore(std::vector<TrajPoint> points, int frame_index,
                            int frame_w, int frame_h) {
    Trajectory t(frame_w, frame_h);
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (points[i].origin_frame > frame_index)
        throw InvalidParams("restore: origin frame past the record frame");
      if (i > 0 && points[i].origin_frame <= points[i - 1].origin_frame)
        throw InvalidParams("restore: origin frames must increase");
    }
    t.points_ = std::move(points);
    t.frame_index_ = frame_index;
    return t;
  }

 private:
  std::vector<TrajPoint> points_;
  int frame_index_ = 0;
  int frame_w_ = 0;
  int frame_h_ = 0;
};

// Per-frame snapshot of a trajectory as it appears in record files: the
// frame index plus the surviving points with their origin indices.
struct FrameRecord {
  int frame = 0;
  std::vector<TrajPoint> points;
};

inline FrameRecord snapshot(const Trajectory& traj) {
  return {traj.frame_index(), traj.points()};
}

namespace detail {

// Value at the window center of a least-squares polynomial fit over
// y[-h..h]. The effective order drops when the window cannot support it.
inline double savgol_center(const double* y, int h, int order) {
  const int n = 2 * h + 1;
  const int m = std::min(order, n - 1);
  if (m == 0) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += y[i];
    return s / n;
  }
  const int k = m + 1;
  std::vector<double> g(static_cast<std::size_t>(k) * k, 0.0), r(k, 0.0), pw(k);
  for (int i = -h; i <= h; ++i) {
    pw[0] = 1.0;
    for (int a = 1; a < k; ++a) pw[a] = pw[a - 1] * i;
    for (int a = 0; a < k; ++a) {
      r[a] += y[i + h] * pw[a];
      for (int b = 0; b < k; ++b) g[static_cast<std::size_t>(a) * k + b] += pw[a] * pw[b];
    }
  }
  // Gaussian elimination with partial pivoting; the normal matrix of a
  // Vandermonde system over distinct nodes is nonsingular.
  for (int col = 0; col < k; ++col) {
    int piv = col;
    for (int row = col + 1; row < k; ++row)
      if (std::abs(g[static_cast<std::size_t>(row) * k + col]) >
          std::abs(g[static_cast<std::size_t>(piv) * k + col]))
        piv = row;
    if (piv != col) {
      for (int c = 0; c < k; ++c)
        std::swap(g[static_cast<std::size_t>(piv) * k + c],
                  g[static_cast<std::size_t>(col) * k + c]);
      std::swap(r[piv], r[col]);
    }
    const double d = g[static_cast<std::size_t>(col) * k + col];
    for (int row = col + 1; row < k; ++row) {
      const double f = g[static_cast<std::size_t>(row) * k + col] / d;
      if (f == 0.0) continue;
      for (int c = col; c < k; ++c)
        g[static_cast<std::size_t>(row) * k + c] -= f * g[static_cast<std::size_t>(col) * k + c];
      r[row] -= f * r[col];
    }
  }
  std::vector<double> x(k);
  for (int row = k - 1; row >= 0; --row) {
    double s = r[row];
    for (int c = row + 1; c < k; ++c) s -= g[static_cast<std::size_t>(row) * k + c] * x[c];
    x[row] = s / g[static_cast<std::size_t>(row) * k + row];
  }
  return x[0];
}

inline std::vector<double> savgol_series(const std::vector<double>& y, int half,
                                         int order) {
  const int len = static_cast<int>(y.size());
  std::vector<double> out(y.size());
  for (int i = 0; i < len; ++i) {
    const int hi = std::min({half, i, len - 1 - i});
    out[i] = savgol_center(y.data() + (i - hi), hi, order);
  }
  return out;
}

}  // namespace detail

// Savitzky-Golay smoothing of the point list, x and y independently.
// Endpoints shrink the window symmetrically and re-fit. Rendering only; the
// metrics always see the raw trajectory.
inline std::vector<Point2> smooth_for_render(const Trajectory& traj, int window = 9,
                                             int poly_order = 2) {
  if (window < 1 || window % 2 == 0)
    throw InvalidParams("smoothing window must be odd and positive");
  if (poly_order < 0 || poly_order >= window)
    throw InvalidParams("poly_order must be in [0, window)");
  std::vector<Point2> raw;
  raw.reserve(traj.size());
  for (const TrajPoint& tp : traj.points()) raw.push_back(tp.p);
  if (static_cast<int>(raw.size()) < window) return raw;

  std::vector<double> xs(raw.size()), ys(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    xs[i] = raw[i].x;
    ys[i] = raw[i].y;
  }
  const std::vector<double> sx = detail::savgol_series(xs, window / 2, poly_order);
  const std::vector<double> sy = detail::savgol_series(ys, window / 2, poly_order);
  std::vector<Point2> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = {sx[i], sy[i]};
  return out;
}

}  // namespace trajvis
