#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define TRAJVIS_FLOW_AVX2 1
#endif

#include "trajvis/image.hpp"
#include "trajvis/types.hpp"

namespace trajvis {

struct FlowParams {
  int window = 21;        // odd, >= 5
  int pyramid_levels = 3;
  int max_iters = 30;
  double eps = 0.01;      // convergence threshold on the step norm, pixels
  double fb_thresh = 1.0; // forward-backward acceptance radius, pixels
};

// Pyramid plus per-level spatial gradients. Built once per frame and shared
// by the forward and backward flow passes; the pipeline also carries it over
// to the next frame pair so each frame is decomposed exactly once.
struct FlowPyramid {
  Pyramid pyr;
  std::vector<Gradients> grads;
};

inline FlowPyramid prepare_flow_pyramid(const GrayFrame& g, int levels) {
  FlowPyramid fp;
  fp.pyr = build_pyramid(g, levels);
  fp.grads.reserve(fp.pyr.levels.size());
  for (const GrayFrame& lvl : fp.pyr.levels) fp.grads.push_back(gradients(lvl));
  return fp;
}

namespace detail {

// Bilinear sampling of an n x n window centered at (cx, cy). Every sample
// shares the same fractional offset, so the four weights are hoisted out of
// the loop. Out-of-range taps replicate the border.
inline void sample_window(const float* img, int w, int h, double cx, double cy,
                          int half, float* dst) {
  const double fx = std::floor(cx), fy = std::floor(cy);
  const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
  const float ax = static_cast<float>(cx - fx), ay = static_cast<float>(cy - fy);
  const float w00 = (1.0f - ax) * (1.0f - ay), w10 = ax * (1.0f - ay);
  const float w01 = (1.0f - ax) * ay, w11 = ax * ay;
  const int n = 2 * half + 1;
  if (ix - half >= 0 && ix + half + 1 < w && iy - half >= 0 && iy + half + 1 < h) {
    for (int j = 0; j < n; ++j) {
      const float* r0 = img + static_cast<std::size_t>(iy - half + j) * w + (ix - half);
      const float* r1 = r0 + w;
      float* o = dst + static_cast<std::size_t>(j) * n;
      for (int i = 0; i < n; ++i)
        o[i] = w00 * r0[i] + w10 * r0[i + 1] + w01 * r1[i] + w11 * r1[i + 1];
    }
    return;
  }
  auto tap = [&](int x, int y) {
    return img[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w +
               std::clamp(x, 0, w - 1)];
  };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int x = ix - half + i, y = iy - half + j;
      dst[static_cast<std::size_t>(j) * n + i] = w00 * tap(x, y) + w10 * tap(x + 1, y) +
                                                 w01 * tap(x, y + 1) +
                                                 w11 * tap(x + 1, y + 1);
    }
}

// Windowed reductions for the tracker. A straight scalar loop serializes on
// floating-point add latency, so both variants keep four independent lanes;
// the vector one is picked at compile time when AVX2 and FMA are available.
inline void gradient_products(const float* gx, const float* gy,
                              std::size_t count, double& xx, double& xy,
                              double& yy) {
#ifdef TRAJVIS_FLOW_AVX2
  __m256d axx = _mm256_setzero_pd();
  __m256d axy = _mm256_setzero_pd();
  __m256d ayy = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    const __m256d vx = _mm256_cvtps_pd(_mm_loadu_ps(gx + i));
    const __m256d vy = _mm256_cvtps_pd(_mm_loadu_ps(gy + i));
    axx = _mm256_fmadd_pd(vx, vx, axx);
    axy = _mm256_fmadd_pd(vx, vy, axy);
    ayy = _mm256_fmadd_pd(vy, vy, ayy);
  }
  alignas(32) double lxx[4], lxy[4], lyy[4];
  _mm256_store_pd(lxx, axx);
  _mm256_store_pd(lxy, axy);
  _mm256_store_pd(lyy, ayy);
#else
  double lxx[4] = {0.0, 0.0, 0.0, 0.0};
  double lxy[4] = {0.0, 0.0, 0.0, 0.0};
  double lyy[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4)
    for (std::size_t k = 0; k < 4; ++k) {
      const double vx = gx[i + k], vy = gy[i + k];
      lxx[k] += vx * vx;
      lxy[k] += vx * vy;
      lyy[k] += vy * vy;
    }
#endif
  for (; i < count; ++i) {
    const double vx = gx[i], vy = gy[i];
    lxx[0] += vx * vx;
    lxy[0] += vx * vy;
    lyy[0] += vy * vy;
  }
  xx = (lxx[0] + lxx[1]) + (lxx[2] + lxx[3]);
  xy = (lxy[0] + lxy[1]) + (lxy[2] + lxy[3]);
  yy = (lyy[0] + lyy[1]) + (lyy[2] + lyy[3]);
}

inline void residual_sums(const float* tm, const float* cu, const float* gx,
                          const float* gy, std::size_t count, double& ex,
                          double& ey) {
#ifdef TRAJVIS_FLOW_AVX2
  __m256d aex = _mm256_setzero_pd();
  __m256d aey = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    const __m256d t = _mm256_cvtps_pd(_mm_loadu_ps(tm + i));
    const __m256d c = _mm256_cvtps_pd(_mm_loadu_ps(cu + i));
    const __m256d d = _mm256_sub_pd(t, c);
    const __m256d vx = _mm256_cvtps_pd(_mm_loadu_ps(gx + i));
    const __m256d vy = _mm256_cvtps_pd(_mm_loadu_ps(gy + i));
    aex = _mm256_fmadd_pd(d, vx, aex);
    aey = _mm256_fmadd_pd(d, vy, aey);
  }
  alignas(32) double lex[4], ley[4];
  _mm256_store_pd(lex, aex);
  _mm256_store_pd(ley, aey);
#else
  double lex[4] = {0.0, 0.0, 0.0, 0.0};
  double ley[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4)
    for (std::size_t k = 0; k < 4; ++k) {
      const double di = static_cast<double>(tm[i + k]) - cu[i + k];
      lex[k] += di * gx[i + k];
      ley[k] += di * gy[i + k];
    }
#endif
  for (; i < count; ++i) {
    const double di = static_cast<double>(tm[i]) - cu[i];
    lex[0] += di * gx[i];
    ley[0] += di * gy[i];
  }
  ex = (lex[0] + lex[1]) + (lex[2] + lex[3]);
  ey = (ley[0] + ley[1]) + (ley[2] + ley[3]);
}

struct SingleTrack {
  Point2 pos{0.0, 0.0};
  bool ok = false;
};

// Scratch buffers reused across points to avoid per-call allocation.
struct FlowScratch {
  std::vector<float> tmpl, gx, gy, cur;
  void resize(int n) {
    const std::size_t sz = static_cast<std::size_t>(n) * n;
    tmpl.resize(sz);
    gx.resize(sz);
    gy.resize(sz);
    cur.resize(sz);
  }
};

// One pyramid level of the single-point Lucas-Kanade solve. The structure
// matrix G comes from the gradients of `a` sampled once; the iterations only
// resample `b`. Sobel outputs are divided by 8 to act as intensity
// derivatives. Returns false when the point leaves the frame or the system
// is degenerate at the finest level; dx/dy carry the displacement estimate
// between levels.
inline bool lk_level_step(const FlowPyramid& a, const FlowPyramid& b, int L,
                          Point2 p, const FlowParams& prm, FlowScratch& scratch,
                          double& dx, double& dy) {
  const int half = prm.window / 2;
  const int n = 2 * half + 1;
  const std::size_t win_sz = static_cast<std::size_t>(n) * n;
  scratch.resize(n);
  constexpr float kSobelScale = 0.125f;

  const GrayFrame& ia = a.pyr.levels[L];
  const GrayFrame& ib = b.pyr.levels[L];
  const Gradients& ga = a.grads[L];
  const double inv = 1.0 / static_cast<double>(1 << L);
  const double px = p.x * inv, py = p.y * inv;
  if (px < 0.0 || px > ia.width - 1 || py < 0.0 || py > ia.height - 1)
    return false;

  sample_window(ia.data.data(), ia.width, ia.height, px, py, half,
                scratch.tmpl.data());
  sample_window(ga.gx.data(), ga.width, ga.height, px, py, half,
                scratch.gx.data());
  sample_window(ga.gy.data(), ga.width, ga.height, px, py, half,
                scratch.gy.data());

  // The Sobel scale is a power of two, so it factors out of the products
  // exactly.
  double sum_xx, sum_xy, sum_yy;
  gradient_products(scratch.gx.data(), scratch.gy.data(), win_sz, sum_xx,
                    sum_xy, sum_yy);
  constexpr double kScale2 = static_cast<double>(kSobelScale) * kSobelScale;
  const double gxx = sum_xx * kScale2;
  const double gxy = sum_xy * kScale2;
  const double gyy = sum_yy * kScale2;
  const double det = gxx * gyy - gxy * gxy;
  const double lmin =
      0.5 * (gxx + gyy) - std::sqrt(0.25 * (gxx - gyy) * (gxx - gyy) + gxy * gxy);
  if (L == 0 && lmin <= 1e-4) return false;

  if (det > 1e-12) {
    for (int it = 0; it < prm.max_iters; ++it) {
      const double cx = px + dx, cy = py + dy;
      if (cx < 0.0 || cx > ib.width - 1 || cy < 0.0 || cy > ib.height - 1)
        return false;
      sample_window(ib.data.data(), ib.width, ib.height, cx, cy, half,
                    scratch.cur.data());
      double sum_ex, sum_ey;
      residual_sums(scratch.tmpl.data(), scratch.cur.data(), scratch.gx.data(),
                    scratch.gy.data(), win_sz, sum_ex, sum_ey);
      const double ex = sum_ex * kSobelScale;
      const double ey = sum_ey * kSobelScale;
      const double sx = (gyy * ex - gxy * ey) / det;
      const double sy = (gxx * ey - gxy * ex) / det;
      dx += sx;
      dy += sy;
      if (std::sqrt(sx * sx + sy * sy) < prm.eps) break;
    }
  }
  const double cx = px + dx, cy = py + dy;
  if (cx < 0.0 || cx > ib.width - 1 || cy < 0.0 || cy > ib.height - 1)
    return false;
  if (L > 0) {
    dx *= 2.0;
    dy *= 2.0;
  }
  return true;
}

// One-direction solve for a batch of points. Each point runs the exact
// per-level sequence above; batching by level just means a level's image and
// gradient planes stream through the cache once for the whole batch instead
// of once per point. `order` (optional) gives the processing order.
inline void lk_track_batch(const FlowPyramid& a, const FlowPyramid& b,
                           const Point2* pts, const std::uint32_t* order,
                           std::size_t count, const FlowParams& prm,
                           FlowScratch& scratch, SingleTrack* out) {
  const int top = std::min<int>(prm.pyramid_levels,
                                static_cast<int>(a.pyr.levels.size())) - 1;
  std::vector<double> dx(count, 0.0), dy(count, 0.0);
  std::vector<char> alive(count, 1);
  for (int L = top; L >= 0; --L)
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t idx = order ? order[i] : i;
      if (alive[idx] &&
          !lk_level_step(a, b, L, pts[idx], prm, scratch, dx[idx], dy[idx]))
        alive[idx] = 0;
    }
  for (std::size_t i = 0; i < count; ++i)
    out[i] = alive[i] ? SingleTrack{{pts[i].x + dx[i], pts[i].y + dy[i]}, true}
                      : SingleTrack{};
}

}  // namespace detail

// Tracks each point from the first frame into the second. A correspondence
// is valid only when the point stays inside bounds at every pyramid level,
// the level-0 structure matrix is well conditioned, and re-tracking the
// result backward lands within fb_thresh of the origin.
inline std::vector<Correspondence> track_points(const FlowPyramid& prev,
                                                const FlowPyramid& next,
                                                const std::vector<Point2>& pts,
                                                const FlowParams& params = {}) {
  std::vector<Correspondence> out(pts.size());
  // Tracks are independent, so process them in raster order: neighboring
  // points share window rows, which keeps the image accesses cache-friendly
  // regardless of how the caller ordered the points.
  std::vector<std::uint32_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (pts[a].y != pts[b].y) return pts[a].y < pts[b].y;
    if (pts[a].x != pts[b].x) return pts[a].x < pts[b].x;
    return a < b;
  });
  detail::FlowScratch scratch;
  std::vector<detail::SingleTrack> fwd(pts.size());
  detail::lk_track_batch(prev, next, pts.data(), order.data(), pts.size(),
                         params, scratch, fwd.data());

  // Re-track the survivors backward; their destinations are close to raster
  // order already, so the batch keeps the order they were produced in.
  std::vector<Point2> back;
  std::vector<std::uint32_t> src;
  back.reserve(pts.size());
  src.reserve(pts.size());
  for (const std::uint32_t idx : order)
    if (fwd[idx].ok) {
      back.push_back(fwd[idx].pos);
      src.push_back(idx);
    }
  std::vector<detail::SingleTrack> bwd(back.size());
  detail::lk_track_batch(next, prev, back.data(), nullptr, back.size(), params,
                         scratch, bwd.data());

  for (std::size_t i = 0; i < pts.size(); ++i) {
    out[i].src = pts[i];
    out[i].dst = fwd[i].ok ? fwd[i].pos : pts[i];
    out[i].valid = false;
  }
  for (std::size_t j = 0; j < back.size(); ++j) {
    const std::uint32_t idx = src[j];
    out[idx].valid =
        bwd[j].ok && distance(bwd[j].pos, pts[idx]) <= params.fb_thresh;
  }
  return out;
}

inline std::vector<Correspondence> track_points(const Pyramid& prev,
                                                const Pyramid& next,
                                                const std::vector<Point2>& pts,
                                                const FlowParams& params = {}) {
  FlowPyramid a, b;
  a.pyr = prev;
  b.pyr = next;
  for (const GrayFrame& lvl : a.pyr.levels) a.grads.push_back(gradients(lvl));
  for (const GrayFrame& lvl : b.pyr.levels) b.grads.push_back(gradients(lvl));
  return track_points(a, b, pts, params);
}

}  // namespace trajvis
