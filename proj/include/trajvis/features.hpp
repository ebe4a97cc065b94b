#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#if defined(__AVX2__)
#include <immintrin.h>
#define TRAJVIS_FEAT_AVX2 1
#endif

#include "trajvis/image.hpp"
#include "trajvis/types.hpp"

namespace trajvis {

struct NoFeatures : std::runtime_error {
  NoFeatures() : std::runtime_error("no features pass the response threshold") {}
};

// Regions whose content is not static scene (tracked target, broadcast
// graphics); pixels inside are barred from corner detection.
struct ExclusionMask {
  std::vector<BBox> rects;
};

struct CornerSet {
  std::vector<Point2> points;      // sub-pixel positions, frame coordinates
  std::vector<float> responses;    // matching lambda_min values, non-increasing
};

struct DetectorParams {
  int max_corners = 1500;
  double quality_level = 0.01;
  double min_distance = 8.0;
  int window = 5;
};

// Shi-Tomasi corner detection: minimum eigenvalue of the box-windowed
// structure tensor, relative quality threshold, greedy selection with
// min-distance suppression. Masked rects are dilated by half the window so
// the structure tensor never straddles excluded content. Callers that
// already hold the frame's Sobel gradients can pass them in; otherwise they
// are computed here.
inline CornerSet detect_corners(const GrayFrame& g, const ExclusionMask& mask,
                                const DetectorParams& params = {},
                                const Gradients* grad = nullptr) {
  if (params.quality_level <= 0.0 || params.quality_level >= 1.0)
    throw std::invalid_argument("quality_level must be in (0, 1)");
  if (params.window < 3 || params.window % 2 == 0)
    throw std::invalid_argument("window must be odd and >= 3");
  if (grad && (grad->width != g.width || grad->height != g.height))
    throw std::invalid_argument("gradients do not match the frame");
  std::optional<Gradients> own;
  if (!grad) grad = &own.emplace(gradients(g));

  const int w = g.width, h = g.height;
  const int half = params.window / 2;
  const int span = params.window;

  // Closed-form minimum eigenvalue of [a b; b c].
  auto min_eig = [](double a, double b, double c) {
    return 0.5 * (a + c) - std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  };

  // Windowed sums of the gradient products, window clamped to the frame.
  // Each window is summed fresh in double from a ring of product rows, so
  // the working set stays a few rows wide; full summed-area tables cost tens
  // of megabytes of traffic on a 720p frame and dominated this routine.
  std::vector<double> ring(static_cast<std::size_t>(span) * 3 * w);
  auto prod_row = [&](int r, int plane) {
    return ring.data() + (static_cast<std::size_t>(r % span) * 3 + plane) * w;
  };
  std::vector<double> vsum(static_cast<std::size_t>(3) * w);
  double* const vxx = vsum.data();
  double* const vxy = vxx + w;
  double* const vyy = vxy + w;
  const int m = w - 2 * half;  // interior columns per row
  std::vector<double> hsum(m > 0 ? static_cast<std::size_t>(3) * m : 0);

  std::vector<float> response(static_cast<std::size_t>(w) * h, 0.0f);
  float max_response = 0.0f;
  int built = 0;  // frame rows whose products are in the ring
  for (int y = 0; y < h; ++y) {
    const int lo = std::max(y - half, 0), hi = std::min(y + half, h - 1);
    for (; built <= hi; ++built) {
      const float* __restrict gx = grad->gx.data() + static_cast<std::size_t>(built) * w;
      const float* __restrict gy = grad->gy.data() + static_cast<std::size_t>(built) * w;
      double* __restrict pxx = prod_row(built, 0);
      double* __restrict pxy = prod_row(built, 1);
      double* __restrict pyy = prod_row(built, 2);
      for (int x = 0; x < w; ++x) {
        pxx[x] = static_cast<double>(gx[x]) * gx[x];
        pxy[x] = static_cast<double>(gx[x]) * gy[x];
        pyy[x] = static_cast<double>(gy[x]) * gy[x];
      }
    }

    std::copy_n(prod_row(lo, 0), w, vxx);
    std::copy_n(prod_row(lo, 1), w, vxy);
    std::copy_n(prod_row(lo, 2), w, vyy);
    for (int r = lo + 1; r <= hi; ++r) {
      const double* __restrict pxx = prod_row(r, 0);
      const double* __restrict pxy = prod_row(r, 1);
      const double* __restrict pyy = prod_row(r, 2);
      double* __restrict axx = vxx;
      double* __restrict axy = vxy;
      double* __restrict ayy = vyy;
      for (int x = 0; x < w; ++x) {
        axx[x] += pxx[x];
        axy[x] += pxy[x];
        ayy[x] += pyy[x];
      }
    }

    float* row = response.data() + static_cast<std::size_t>(y) * w;
    auto edge_col = [&](int x) {
      const int c0 = std::max(x - half, 0), c1 = std::min(x + half, w - 1);
      double a = 0.0, b = 0.0, c = 0.0;
      for (int k = c0; k <= c1; ++k) {
        a += vxx[k];
        b += vxy[k];
        c += vyy[k];
      }
      row[x] = std::max(static_cast<float>(min_eig(a, b, c)), 0.0f);
    };
    if (m > 0) {
      for (int x = 0; x < half; ++x) edge_col(x);
      double* __restrict hxx = hsum.data();
      double* __restrict hxy = hxx + m;
      double* __restrict hyy = hxy + m;
      std::copy_n(vxx, m, hxx);
      std::copy_n(vxy, m, hxy);
      std::copy_n(vyy, m, hyy);
      for (int j = 1; j < span; ++j) {
        const double* __restrict sxx = vxx + j;
        const double* __restrict sxy = vxy + j;
        const double* __restrict syy = vyy + j;
        for (int k = 0; k < m; ++k) {
          hxx[k] += sxx[k];
          hxy[k] += sxy[k];
          hyy[k] += syy[k];
        }
      }
      float* __restrict out = row + half;
      // max on the float side: the double max blocks the vectorizer here
      for (int k = 0; k < m; ++k)
        out[k] = std::max(static_cast<float>(min_eig(hxx[k], hxy[k], hyy[k])), 0.0f);
      for (int x = w - half; x < w; ++x) edge_col(x);
    } else {
      for (int x = 0; x < w; ++x) edge_col(x);
    }
    for (int i = 0; i < w; ++i) max_response = std::max(max_response, row[i]);
  }

  // Zero out the dilated exclusion rects.
  for (const BBox& rect : mask.rects) {
    const int x0 = std::clamp(static_cast<int>(std::floor(rect.x)) - half, 0, w);
    const int y0 = std::clamp(static_cast<int>(std::floor(rect.y)) - half, 0, h);
    const int x1 =
        std::clamp(static_cast<int>(std::ceil(rect.x + rect.w)) + half, 0, w);
    const int y1 =
        std::clamp(static_cast<int>(std::ceil(rect.y + rect.h)) + half, 0, h);
    for (int y = y0; y < y1; ++y)
      std::fill(response.begin() + static_cast<std::size_t>(y) * w + x0,
                response.begin() + static_cast<std::size_t>(y) * w + x1, 0.0f);
    max_response = 0.0f;  // recomputed below when masking happened
  }
  if (!mask.rects.empty())
    max_response = *std::max_element(response.begin(), response.end());

  if (max_response <= 0.0f) throw NoFeatures();
  const float thresh = static_cast<float>(params.quality_level) * max_response;

  struct Candidate {
    float resp;
    float x, y;  // refined sub-pixel position
  };
  std::vector<Candidate> candidates;
  // Keep local maxima only (8-neighborhood, out-of-frame neighbors count as
  // zero, ties broken toward the lexicographically first pixel so selection
  // stays deterministic).
  auto consider = [&](int x, int y) {
    const float* row = response.data() + static_cast<std::size_t>(y) * w;
    const float r = row[x];
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const float nr = (x + dx >= 0 && x + dx < w && y + dy >= 0 && y + dy < h)
                             ? response[static_cast<std::size_t>(y + dy) * w + x + dx]
                             : 0.0f;
        if (nr > r || (nr == r && (dy < 0 || (dy == 0 && dx < 0)))) return;
      }

    // Parabolic sub-pixel refinement along each axis.
    float fx = static_cast<float>(x), fy = static_cast<float>(y);
    if (x > 0 && x < w - 1) {
      const float denom = row[x - 1] - 2.0f * r + row[x + 1];
      if (denom < 0.0f)
        fx += std::clamp(0.5f * (row[x - 1] - row[x + 1]) / denom, -0.5f, 0.5f);
    }
    if (y > 0 && y < h - 1) {
      const float up = response[static_cast<std::size_t>(y - 1) * w + x];
      const float dn = response[static_cast<std::size_t>(y + 1) * w + x];
      const float denom = up - 2.0f * r + dn;
      if (denom < 0.0f) fy += std::clamp(0.5f * (up - dn) / denom, -0.5f, 0.5f);
    }
    candidates.push_back({r, fx, fy});
  };
  // The response is dense above the threshold on textured frames, so a
  // separable 3x3 maximum prunes the scan first: a pixel smaller than the
  // max of the three vertical triples around it cannot be a local maximum.
  // Survivors (including exact ties) still run the full test above.
  std::vector<float> vmax3(static_cast<std::size_t>(w) + 2, 0.0f);
  std::vector<float> vmax2(w);
  for (int y = 0; y < h; ++y) {
    const float* row = response.data() + static_cast<std::size_t>(y) * w;
    const float* up = y > 0 ? row - w : nullptr;
    const float* dn = y + 1 < h ? row + w : nullptr;
    float* v3 = vmax3.data() + 1;  // zero sentinel on both sides
    if (up && dn) {
      for (int x = 0; x < w; ++x) {
        const float m2 = std::max(up[x], dn[x]);
        vmax2[x] = m2;
        v3[x] = std::max(m2, row[x]);
      }
    } else {
      const float* other = up ? up : dn;
      for (int x = 0; x < w; ++x) {
        const float m2 = other ? other[x] : 0.0f;
        vmax2[x] = m2;
        v3[x] = std::max(m2, row[x]);
      }
    }
    int x = 0;
#ifdef TRAJVIS_FEAT_AVX2
    const __m256 vt = _mm256_set1_ps(thresh);
    const __m256 vz = _mm256_setzero_ps();
    for (; x + 8 <= w; x += 8) {
      const __m256 r = _mm256_loadu_ps(row + x);
      const __m256 m8 = _mm256_max_ps(
          _mm256_max_ps(_mm256_loadu_ps(v3 + x - 1), _mm256_loadu_ps(v3 + x + 1)),
          _mm256_loadu_ps(vmax2.data() + x));
      const __m256 keep =
          _mm256_and_ps(_mm256_and_ps(_mm256_cmp_ps(r, vt, _CMP_GE_OQ),
                                      _mm256_cmp_ps(r, vz, _CMP_GT_OQ)),
                        _mm256_cmp_ps(r, m8, _CMP_GE_OQ));
      unsigned bits = static_cast<unsigned>(_mm256_movemask_ps(keep));
      while (bits) {
        consider(x + std::countr_zero(bits), y);
        bits &= bits - 1;
      }
    }
#endif
    for (; x < w; ++x) {
      const float r = row[x];
      if (r < thresh || r <= 0.0f) continue;
      if (r < std::max(std::max(v3[x - 1], v3[x + 1]), vmax2[x])) continue;
      consider(x, y);
    }
  }
  if (candidates.empty()) throw NoFeatures();

  // Selection wants candidates in order of descending response with ties by
  // position, but it usually stops at max_corners long before the list is
  // exhausted, so pop them from a heap instead of sorting everything.
  auto heap_less = [](const Candidate& a, const Candidate& b) {
    if (a.resp != b.resp) return a.resp < b.resp;
    if (a.y != b.y) return a.y > b.y;
    return a.x > b.x;
  };
  std::make_heap(candidates.begin(), candidates.end(), heap_less);
  auto heap_end = candidates.end();

  // Greedy min-distance suppression over a coarse grid.
  const double min_dist = params.min_distance;
  const double cell = std::max(min_dist, 1.0);
  const int gw = static_cast<int>(w / cell) + 1;
  const int gh = static_cast<int>(h / cell) + 1;
  std::vector<std::vector<int>> grid(static_cast<std::size_t>(gw) * gh);

  CornerSet out;
  while (heap_end != candidates.begin() &&
         static_cast<int>(out.points.size()) < params.max_corners) {
    std::pop_heap(candidates.begin(), heap_end, heap_less);
    const Candidate c = *--heap_end;
    const int cx = static_cast<int>(c.x / cell), cy = static_cast<int>(c.y / cell);
    bool ok = true;
    for (int ny = std::max(cy - 1, 0); ny <= std::min(cy + 1, gh - 1) && ok; ++ny)
      for (int nx = std::max(cx - 1, 0); nx <= std::min(cx + 1, gw - 1); ++nx) {
        for (int idx : grid[static_cast<std::size_t>(ny) * gw + nx]) {
          const double dx = out.points[static_cast<std::size_t>(idx)].x - c.x;
          const double dy = out.points[static_cast<std::size_t>(idx)].y - c.y;
          if (dx * dx + dy * dy < min_dist * min_dist) {
            ok = false;
            break;
          }
        }
        if (!ok) break;
      }
    if (!ok) continue;
    grid[static_cast<std::size_t>(cy) * gw + cx].push_back(
        static_cast<int>(out.points.size()));
    out.points.push_back({c.x, c.y});
    out.responses.push_back(c.resp);
  }
  return out;
}

}  // namespace trajvis
