#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "trajvis/types.hpp"

namespace trajvis {

struct PointAtInfinity : std::runtime_error {
  PointAtInfinity() : std::runtime_error("point maps outside the projective chart") {}
};

struct DegenerateConfiguration : std::runtime_error {
  explicit DegenerateConfiguration(const std::string& what)
      : std::runtime_error("degenerate configuration: " + what) {}
};

struct NoConsensus : std::runtime_error {
  explicit NoConsensus(const std::string& what)
      : std::runtime_error("no consensus: " + what) {}
};

// 3x3 projective map between pixel coordinate systems, stored row-major.
// Canonical scale: m[8] = 1 when |m[8]| is not vanishing, otherwise unit
// Frobenius norm with the largest-magnitude coefficient positive.
class Homography {
 public:
  Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

  explicit Homography(const std::array<double, 9>& coeffs) : m_(coeffs) {
    canonicalize();
  }

  static Homography identity() { return Homography(); }

  static Homography translation(double tx, double ty) {
    return Homography({1, 0, tx, 0, 1, ty, 0, 0, 1});
  }

  static Homography scaling(double sx, double sy) {
    return Homography({sx, 0, 0, 0, sy, 0, 0, 0, 1});
  }

  double at(int r, int c) const { return m_[static_cast<std::size_t>(r) * 3 + c]; }
  const std::array<double, 9>& coeffs() const { return m_; }

  double det() const {
    return m_[0] * (m_[4] * m_[8] - m_[5] * m_[7]) -
           m_[1] * (m_[3] * m_[8] - m_[5] * m_[6]) +
           m_[2] * (m_[3] * m_[7] - m_[4] * m_[6]);
  }

  bool invertible() const { return std::abs(det()) > 1e-12; }

  Homography inverse() const {
    const double d = det();
    if (!(std::abs(d) > 1e-12) || !std::isfinite(d))
      throw DegenerateConfiguration("homography is not invertible");
    const std::array<double, 9>& m = m_;
    std::array<double, 9> inv{};
    inv[0] = (m[4] * m[8] - m[5] * m[7]) / d;
    inv[1] = (m[2] * m[7] - m[1] * m[8]) / d;
    inv[2] = (m[1] * m[5] - m[2] * m[4]) / d;
    inv[3] = (m[5] * m[6] - m[3] * m[8]) / d;
    inv[4] = (m[0] * m[8] - m[2] * m[6]) / d;
    inv[5] = (m[2] * m[3] - m[0] * m[5]) / d;
    inv[6] = (m[3] * m[7] - m[4] * m[6]) / d;
    inv[7] = (m[1] * m[6] - m[0] * m[7]) / d;
    inv[8] = (m[0] * m[4] - m[1] * m[3]) / d;
    return Homography(inv);
  }

  // Composition: (a * b) maps p the same way as a(b(p)).
  friend Homography operator*(const Homography& a, const Homography& b) {
    std::array<double, 9> r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += a.at(i, k) * b.at(k, j);
        r[static_cast<std::size_t>(i) * 3 + j] = s;
      }
    return Homography(r);
  }

 private:
  void canonicalize() {
    if (std::abs(m_[8]) > 1e-9) {
      const double inv = 1.0 / m_[8];
      for (double& v : m_) v *= inv;
      m_[8] = 1.0;
    } else {
      double norm = 0.0;
      for (double v : m_) norm += v * v;
      norm = std::sqrt(norm);
      if (norm == 0.0) throw DegenerateConfiguration("zero homography matrix");
      double largest = 0.0;
      for (double v : m_)
        if (std::abs(v) > std::abs(largest)) largest = v;
      const double scale = (largest < 0.0 ? -1.0 : 1.0) / norm;
      for (double& v : m_) v *= scale;
    }
  }

  std::array<double, 9> m_;
};

namespace detail {

// Non-throwing projective application; returns nullopt when the homogeneous
// scale vanishes.
inline std::optional<Point2> apply_checked(const Homography& h, const Point2& p) {
  const double u = h.at(0, 0) * p.x + h.at(0, 1) * p.y + h.at(0, 2);
  const double v = h.at(1, 0) * p.x + h.at(1, 1) * p.y + h.at(1, 2);
  const double s = h.at(2, 0) * p.x + h.at(2, 1) * p.y + h.at(2, 2);
  if (std::abs(s) < 1e-9) return std::nullopt;
  return Point2{u / s, v / s};
}

// Eigen-decomposition of a symmetric n x n matrix via cyclic Jacobi
// rotations. `a` is row-major and gets destroyed; eigenvectors are returned
// as columns of `v`.
template <int N>
void jacobi_eigen_symmetric(std::array<double, N * N>& a,
                            std::array<double, N>& eigenvalues,
                            std::array<double, N * N>& v) {
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) v[i * N + j] = (i == j) ? 1.0 : 0.0;

  double fro2 = 0.0;
  for (double x : a) fro2 += x * x;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < N; ++p)
      for (int q = p + 1; q < N; ++q) off += a[p * N + q] * a[p * N + q];
    if (off <= 1e-28 * std::max(fro2, 1e-300)) break;

    for (int p = 0; p < N; ++p) {
      for (int q = p + 1; q < N; ++q) {
        const double apq = a[p * N + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[p * N + p];
        const double aqq = a[q * N + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (int k = 0; k < N; ++k) {
          const double akp = a[k * N + p];
          const double akq = a[k * N + q];
          a[k * N + p] = c * akp - s * akq;
          a[k * N + q] = s * akp + c * akq;
        }
        for (int k = 0; k < N; ++k) {
          const double apk = a[p * N + k];
          const double aqk = a[q * N + k];
          a[p * N + k] = c * apk - s * aqk;
          a[q * N + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < N; ++k) {
          const double vkp = v[k * N + p];
          const double vkq = v[k * N + q];
          v[k * N + p] = c * vkp - s * vkq;
          v[k * N + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  for (int i = 0; i < N; ++i) eigenvalues[i] = a[i * N + i];
}

struct Normalization {
  double scale = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Homography as_homography() const {
    return Homography({scale, 0, -scale * cx, 0, scale, -scale * cy, 0, 0, 1});
  }
};

// Hartley normalization: centroid to origin, mean distance sqrt(2).
template <typename GetPoint>
Normalization normalize_points(std::size_t n, GetPoint get) {
  Normalization t;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 p = get(i);
    t.cx += p.x;
    t.cy += p.y;
  }
  t.cx /= static_cast<double>(n);
  t.cy /= static_cast<double>(n);
  double mean_dist = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 p = get(i);
    mean_dist += std::hypot(p.x - t.cx, p.y - t.cy);
  }
  mean_dist /= static_cast<double>(n);
  t.scale = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  return t;
}

}  // namespace detail

// Applies h to p and dehomogenizes. Throws PointAtInfinity when the point
// leaves the projective chart; callers treat that as clipped.
inline Point2 apply(const Homography& h, const Point2& p) {
  const auto q = detail::apply_checked(h, p);
  if (!q) throw PointAtInfinity();
  return *q;
}

// Least-squares homography from >= 4 valid correspondences. Builds the
// standard 2n x 9 DLT system on Hartley-normalized coordinates and takes the
// smallest-eigenvalue eigenvector of the 9x9 normal matrix.
inline Homography fit_dlt(const std::vector<Correspondence>& matches) {
  std::vector<const Correspondence*> valid;
  valid.reserve(matches.size());
  for (const auto& m : matches)
    if (m.valid && m.src.finite() && m.dst.finite()) valid.push_back(&m);
  if (valid.size() < 4)
    throw DegenerateConfiguration("need at least 4 valid correspondences");

  const std::size_t n = valid.size();
  const auto t_src =
      detail::normalize_points(n, [&](std::size_t i) { return valid[i]->src; });
  const auto t_dst =
      detail::normalize_points(n, [&](std::size_t i) { return valid[i]->dst; });

  // Accumulate the 9x9 normal matrix A^T A directly.
  std::array<double, 81> ata{};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = t_src.scale * (valid[i]->src.x - t_src.cx);
    const double y = t_src.scale * (valid[i]->src.y - t_src.cy);
    const double u = t_dst.scale * (valid[i]->dst.x - t_dst.cx);
    const double v = t_dst.scale * (valid[i]->dst.y - t_dst.cy);

    const double row1[9] = {-x, -y, -1, 0, 0, 0, u * x, u * y, u};
    const double row2[9] = {0, 0, 0, -x, -y, -1, v * x, v * y, v};
    for (int r = 0; r < 9; ++r)
      for (int c = r; c < 9; ++c)
        ata[static_cast<std::size_t>(r) * 9 + c] += row1[r] * row1[c] + row2[r] * row2[c];
  }
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < r; ++c)
      ata[static_cast<std::size_t>(r) * 9 + c] = ata[static_cast<std::size_t>(c) * 9 + r];

  std::array<double, 9> eigenvalues{};
  std::array<double, 81> vectors{};
  detail::jacobi_eigen_symmetric<9>(ata, eigenvalues, vectors);

  int smallest = 0, second = -1;
  double max_eig = 0.0;
  for (int i = 0; i < 9; ++i) {
    if (eigenvalues[i] < eigenvalues[smallest]) smallest = i;
    max_eig = std::max(max_eig, std::abs(eigenvalues[i]));
  }
  for (int i = 0; i < 9; ++i) {
    if (i == smallest) continue;
    if (second < 0 || eigenvalues[i] < eigenvalues[second]) second = i;
  }
  // A second near-null direction means the system does not pin down a unique
  // homography (collinear or coincident points).
  if (max_eig <= 0.0 || eigenvalues[second] < 1e-12 * max_eig)
    throw DegenerateConfiguration("rank-deficient correspondence system");

  std::array<double, 9> hn{};
  for (int i = 0; i < 9; ++i) hn[static_cast<std::size_t>(i)] = vectors[static_cast<std::size_t>(i) * 9 + smallest];

  const Homography h_norm(hn);
  const Homography h =
      t_dst.as_homography().inverse() * h_norm * t_src.as_homography();
  if (!h.invertible())
    throw DegenerateConfiguration("fitted homography is singular");
  return h;
}

struct RansacParams {
  int max_iters = 2000;
  double inlier_thresh = 3.0;  // pixels, symmetric transfer error
  double confidence = 0.999;
  std::uint64_t seed = 0;
};

struct RansacResult {
  Homography h;
  std::vector<bool> inliers;  // aligned with the input match list
  int inlier_count = 0;
  int iterations = 0;
};

namespace detail {

inline std::optional<double> symmetric_transfer_error(const Homography& h,
                                                      const Homography& h_inv,
                                                      const Correspondence& m) {
  const auto fwd = apply_checked(h, m.src);
  const auto bwd = apply_checked(h_inv, m.dst);
  if (!fwd || !bwd) return std::nullopt;
  return 0.5 * (distance(*fwd, m.dst) + distance(*bwd, m.src));
}

}  // namespace detail

// Robust homography estimation. Samples minimal 4-point subsets, scores by
// symmetric transfer error, keeps the best consensus, and refits on all of
// its inliers. Deterministic for a fixed seed. Stops early once the adaptive
// iteration bound for the requested confidence is reached.
inline RansacResult ransac_homography(const std::vector<Correspondence>& matches,
                                      const RansacParams& params = {}) {
  std::vector<std::size_t> valid_idx;
  for (std::size_t i = 0; i < matches.size(); ++i)
    if (matches[i].valid && matches[i].src.finite() && matches[i].dst.finite())
      valid_idx.push_back(i);
  const std::size_t n_valid = valid_idx.size();
  if (n_valid < 4) throw NoConsensus("fewer than 4 valid correspondences");

  Rng rng(params.seed);
  std::vector<bool> best_mask(matches.size(), false);
  int best_count = 0;
  Homography best_h;
  double iter_bound = params.max_iters;
  int it = 0;

  std::vector<Correspondence> sample(4);
  for (; it < params.max_iters && it < iter_bound; ++it) {
    std::size_t pick[4];
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        pick[k] = valid_idx[rng.next_below(n_valid)];
        fresh = true;
        for (int j = 0; j < k; ++j) fresh = fresh && pick[j] != pick[k];
      } while (!fresh);
      sample[static_cast<std::size_t>(k)] = matches[pick[k]];
    }

    Homography h;
    try {
      h = fit_dlt(sample);
    } catch (const DegenerateConfiguration&) {
      continue;
    }
    Homography h_inv;
    try {
      h_inv = h.inverse();
    } catch (const DegenerateConfiguration&) {
      continue;
    }

    int count = 0;
    std::vector<bool> mask(matches.size(), false);
    for (std::size_t i : valid_idx) {
      const auto err = detail::symmetric_transfer_error(h, h_inv, matches[i]);
      if (err && *err <= params.inlier_thresh) {
        mask[i] = true;
        ++count;
      }
    }

    if (count > best_count) {
      best_count = count;
      best_mask = std::move(mask);
      best_h = h;
      // Adaptive bound: iterations needed to hit an all-inlier sample with
      // the requested confidence, given the observed inlier ratio.
      const double w = static_cast<double>(count) / static_cast<double>(n_valid);
      const double w4 = w * w * w * w;
      if (w4 >= 1.0) {
        iter_bound = it + 1;
      } else {
        const double denom = std::log1p(-w4);
        if (denom < 0.0)
          iter_bound = std::ceil(std::log(1.0 - params.confidence) / denom);
      }
    }
  }

  if (best_count < 4 ||
      best_count < 0.1 * static_cast<double>(n_valid))
    throw NoConsensus("best consensus of " + std::to_string(best_count) +
                      " among " + std::to_string(n_valid) + " matches");

  std::vector<Correspondence> consensus;
  consensus.reserve(static_cast<std::size_t>(best_count));
  for (std::size_t i = 0; i < matches.size(); ++i)
    if (best_mask[i]) consensus.push_back(matches[i]);

  RansacResult result;
  result.h = best_h;
  try {
    result.h = fit_dlt(consensus);
  } catch (const DegenerateConfiguration&) {
    // Keep the minimal-sample model when the refit collapses.
  }

  // Final mask against the refit model.
  Homography h_inv = result.h.inverse();
  result.inliers.assign(matches.size(), false);
  result.inlier_count = 0;
  for (std::size_t i : valid_idx) {
    const auto err = detail::symmetric_transfer_error(result.h, h_inv, matches[i]);
    if (err && *err <= params.inlier_thresh) {
      result.inliers[i] = true;
      ++result.inlier_count;
    }
  }
  if (result.inlier_count < 4) {
    result.h = best_h;
    result.inliers = best_mask;
    result.inlier_count = best_count;
  }
  result.iterations = it;
  return result;
}

}  // namespace trajvis
