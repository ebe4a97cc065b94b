#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajvis/geometry.hpp"
#include "trajvis/trajectory.hpp"
#include "trajvis/types.hpp"

namespace trajvis {

struct FrameCountMismatch : std::runtime_error {
  FrameCountMismatch()
      : std::runtime_error("prediction and reference frame counts differ") {}
};

struct EmptyTrajectory : std::runtime_error {
  EmptyTrajectory() : std::runtime_error("DTW requires non-empty trajectories") {}
};

struct LengthMismatch : std::runtime_error {
  LengthMismatch() : std::runtime_error("sequence lengths differ") {}
};

// What a visible reference point scores when its predicted counterpart was
// clipped out of frame: a bounded penalty (the frame diagonal) or nothing.
enum class ClippedPairRule { FrameDiagonalPenalty, SkipPair };

// Mean per-point trajectory error. Per frame, each visible reference point
// is matched by origin index against the prediction and scored by Euclidean
// distance; frame means are averaged over all frames.
inline double mppte(const std::vector<FrameRecord>& pred,
                    const std::vector<FrameRecord>& ref, int frame_w, int frame_h,
                    ClippedPairRule rule = ClippedPairRule::FrameDiagonalPenalty) {
  if (pred.size() != ref.size()) throw FrameCountMismatch();
  if (ref.empty()) return 0.0;
  const double diag = std::hypot(static_cast<double>(frame_w), static_cast<double>(frame_h));
  double total = 0.0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    double frame_sum = 0.0;
    int counted = 0;
    for (const TrajPoint& q : ref[t].points) {
      const auto it = std::lower_bound(
          pred[t].points.begin(), pred[t].points.end(), q.origin_frame,
          [](const TrajPoint& tp, int origin) { return tp.origin_frame < origin; });
      if (it != pred[t].points.end() && it->origin_frame == q.origin_frame) {
        frame_sum += distance(it->p, q.p);
        ++counted;
      } else if (rule == ClippedPairRule::FrameDiagonalPenalty) {
        frame_sum += diag;
        ++counted;
      }
    }
    if (counted > 0) total += frame_sum / counted;
  }
  return total / static_cast<double>(ref.size());
}

// Dynamic time warping with Euclidean local cost; boundary-matched, steps
// (1,0), (0,1), (1,1). Returns the accumulated cost of the optimal path.
inline double dtw(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  if (a.empty() || b.empty()) throw EmptyTrajectory();
  const std::size_t n = a.size(), m = b.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, kInf), cur(m + 1, kInf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = kInf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double c = distance(a[i - 1], b[j - 1]);
      cur[j] = c + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// Per-frame DTW between prediction and reference records, averaged over all
// frames. Frames where either side has no points contribute zero.
inline double mean_pairwise_dtw(const std::vector<FrameRecord>& pred,
                                const std::vector<FrameRecord>& ref) {
  if (pred.size() != ref.size()) throw FrameCountMismatch();
  if (ref.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (pred[t].points.empty() || ref[t].points.empty()) continue;
    std::vector<Point2> a, b;
    a.reserve(pred[t].points.size());
    b.reserve(ref[t].points.size());
    for (const TrajPoint& tp : pred[t].points) a.push_back(tp.p);
    for (const TrajPoint& tp : ref[t].points) b.push_back(tp.p);
    total += dtw(a, b);
  }
  return total / static_cast<double>(ref.size());
}

// Mean squared difference over the 9 coefficients of the canonical forms.
inline double homography_mse(const Homography& h, const Homography& h_ref) {
  double s = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double d = h.coeffs()[i] - h_ref.coeffs()[i];
    s += d * d;
  }
  return s / 9.0;
}

inline double mean_homography_mse(const std::vector<Homography>& pred,
                                  const std::vector<Homography>& ref) {
  if (pred.size() != ref.size()) throw LengthMismatch();
  if (ref.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) s += homography_mse(pred[i], ref[i]);
  return s / static_cast<double>(ref.size());
}

struct SuccessResult {
  double auc = 0.0;               // mean IoU x 100
  std::array<double, 21> curve{}; // success rate at thresholds 0, 0.05, ..., 1
};

inline SuccessResult success_auc(const std::vector<BBox>& pred,
                                 const std::vector<BBox>& gt) {
  if (pred.size() != gt.size()) throw LengthMismatch();
  SuccessResult out;
  if (gt.empty()) return out;
  std::vector<double> ious(gt.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    ious[i] = iou(pred[i], gt[i]);
    sum += ious[i];
  }
  out.auc = 100.0 * sum / static_cast<double>(gt.size());
  for (int k = 0; k < 21; ++k) {
    const double thr = 0.05 * k;
    int passed = 0;
    for (const double v : ious)
      if (v > thr) ++passed;
    out.curve[k] = static_cast<double>(passed) / static_cast<double>(gt.size());
  }
  return out;
}

struct TimingSummary {
  double mean_ms = 0.0;
  double fps = 0.0;
  double delta_t = 0.0;  // seconds of lag past the clip's own duration
};

inline TimingSummary timing(const std::vector<double>& per_frame_ms,
                            double clip_duration_s) {
  if (per_frame_ms.empty())
    throw std::invalid_argument("timing needs at least one sample");
  double total_ms = 0.0;
  for (const double v : per_frame_ms) total_ms += v;
  TimingSummary out;
  out.mean_ms = total_ms / static_cast<double>(per_frame_ms.size());
  out.fps = out.mean_ms > 0.0 ? 1000.0 / out.mean_ms : 0.0;
  out.delta_t = std::max(0.0, total_ms / 1000.0 - clip_duration_s);
  return out;
}

struct ClipScores {
  std::string clip_id;
  double mppte = 0.0;
  double dtw = 0.0;
  double homography_mse = 0.0;
  double auc = 0.0;
  double mean_ms = 0.0;
  double fps = 0.0;
  double delta_t = 0.0;
  std::array<double, 21> success_curve{};
};

struct EvalReport {
  double mppte = 0.0;
  double dtw = 0.0;
  double homography_mse = 0.0;
  double auc = 0.0;
  double mean_ms = 0.0;
  double fps = 0.0;
  double delta_t = 0.0;
  std::vector<ClipScores> clips;
};

inline EvalReport aggregate_clips(std::vector<ClipScores> clips) {
  EvalReport rep;
  rep.clips = std::move(clips);
  if (rep.clips.empty()) return rep;
  const double n = static_cast<double>(rep.clips.size());
  for (const ClipScores& c : rep.clips) {
    rep.mppte += c.mppte;
    rep.dtw += c.dtw;
    rep.homography_mse += c.homography_mse;
    rep.auc += c.auc;
    rep.mean_ms += c.mean_ms;
    rep.delta_t += c.delta_t;
  }
  rep.mppte /= n;
  rep.dtw /= n;
  rep.homography_mse /= n;
  rep.auc /= n;
  rep.mean_ms /= n;
  rep.delta_t /= n;
  rep.fps = rep.mean_ms > 0.0 ? 1000.0 / rep.mean_ms : 0.0;
  return rep;
}

}  // namespace trajvis
