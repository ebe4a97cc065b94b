#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "trajvis/types.hpp"

namespace trajvis {

struct ImageTooSmall : std::runtime_error {
  ImageTooSmall() : std::runtime_error("image too small for this operation") {}
};

// 8-bit RGB frame, row-major interleaved.
struct ColorFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // width * height * 3

  ColorFrame() = default;
  ColorFrame(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* pixel(int x, int y) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* pixel(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

// Grayscale working frame, intensities in [0, 1].
struct GrayFrame {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // width * height

  GrayFrame() = default;
  GrayFrame(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  float& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  float at_clamped(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return at(x, y);
  }
};

// Per-pixel derivative fields, same layout as the source frame.
struct Gradients {
  int width = 0;
  int height = 0;
  std::vector<float> gx;
  std::vector<float> gy;
};

struct Pyramid {
  std::vector<GrayFrame> levels;  // level 0 = full resolution
};

inline GrayFrame to_gray(const ColorFrame& f) {
  GrayFrame g(f.width, f.height);
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = f.data.data() + i * 3;
    g.data[i] = (0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2]) / 255.0f;
  }
  return g;
}

namespace detail {

// Separable [1 4 6 4 1]/16 blur with replicate borders.
inline GrayFrame binomial_blur5(const GrayFrame& g) {
  const int w = g.width, h = g.height;
  GrayFrame tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    const float* row = g.data.data() + static_cast<std::size_t>(y) * w;
    float* dst = tmp.data.data() + static_cast<std::size_t>(y) * w;
    auto edge = [&](int x) {
      const int xm2 = std::max(x - 2, 0), xm1 = std::max(x - 1, 0);
      const int xp1 = std::min(x + 1, w - 1), xp2 = std::min(x + 2, w - 1);
      dst[x] = (row[xm2] + 4.0f * row[xm1] + 6.0f * row[x] + 4.0f * row[xp1] +
                row[xp2]) /
               16.0f;
    };
    for (int x = 0; x < std::min(2, w); ++x) edge(x);
    for (int x = 2; x < w - 2; ++x)
      dst[x] = (row[x - 2] + 4.0f * row[x - 1] + 6.0f * row[x] +
                4.0f * row[x + 1] + row[x + 2]) /
               16.0f;
    for (int x = std::max(w - 2, 2); x < w; ++x) edge(x);
  }
  for (int y = 0; y < h; ++y) {
    const int ym2 = std::max(y - 2, 0), ym1 = std::max(y - 1, 0);
    const int yp1 = std::min(y + 1, h - 1), yp2 = std::min(y + 2, h - 1);
    const float* r0 = tmp.data.data() + static_cast<std::size_t>(ym2) * w;
    const float* r1 = tmp.data.data() + static_cast<std::size_t>(ym1) * w;
    const float* r2 = tmp.data.data() + static_cast<std::size_t>(y) * w;
    const float* r3 = tmp.data.data() + static_cast<std::size_t>(yp1) * w;
    const float* r4 = tmp.data.data() + static_cast<std::size_t>(yp2) * w;
    float* dst = out.data.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x)
      dst[x] = (r0[x] + 4.0f * r1[x] + 6.0f * r2[x] + 4.0f * r3[x] + r4[x]) / 16.0f;
  }
  return out;
}

// The binomial blur evaluated only at even pixels, matching blur followed by
// 2x decimation tap for tap while skipping the three quarters of the frame
// the decimation would drop.
inline GrayFrame blur_decimate(const GrayFrame& g, int nw, int nh) {
  const int w = g.width, h = g.height;
  GrayFrame tmp(nw, h), out(nw, nh);  // horizontal pass keeps even columns
  for (int y = 0; y < h; ++y) {
    const float* row = g.data.data() + static_cast<std::size_t>(y) * w;
    float* dst = tmp.data.data() + static_cast<std::size_t>(y) * nw;
    auto edge = [&](int x) {
      const int c = 2 * x;
      const int xm2 = std::max(c - 2, 0), xm1 = std::max(c - 1, 0);
      const int xp1 = std::min(c + 1, w - 1), xp2 = std::min(c + 2, w - 1);
      dst[x] = (row[xm2] + 4.0f * row[xm1] + 6.0f * row[c] + 4.0f * row[xp1] +
                row[xp2]) /
               16.0f;
    };
    const int xend = std::min(nw, (w - 1) / 2);
    int x = 0;
    for (; x < std::min(1, nw); ++x) edge(x);
    for (; x < xend; ++x) {
      const int c = 2 * x;
      dst[x] = (row[c - 2] + 4.0f * row[c - 1] + 6.0f * row[c] +
                4.0f * row[c + 1] + row[c + 2]) /
               16.0f;
    }
    for (; x < nw; ++x) edge(x);
  }
  for (int y = 0; y < nh; ++y) {
    const int c = 2 * y;
    const int ym2 = std::max(c - 2, 0), ym1 = std::max(c - 1, 0);
    const int yp1 = std::min(c + 1, h - 1), yp2 = std::min(c + 2, h - 1);
    const float* r0 = tmp.data.data() + static_cast<std::size_t>(ym2) * nw;
    const float* r1 = tmp.data.data() + static_cast<std::size_t>(ym1) * nw;
    const float* r2 = tmp.data.data() + static_cast<std::size_t>(c) * nw;
    const float* r3 = tmp.data.data() + static_cast<std::size_t>(yp1) * nw;
    const float* r4 = tmp.data.data() + static_cast<std::size_t>(yp2) * nw;
    float* dst = out.data.data() + static_cast<std::size_t>(y) * nw;
    for (int x = 0; x < nw; ++x)
      dst[x] = (r0[x] + 4.0f * r1[x] + 6.0f * r2[x] + 4.0f * r3[x] + r4[x]) / 16.0f;
  }
  return out;
}

}  // namespace detail

// Downsampling pyramid: each level is the binomial blur of the previous one
// decimated by 2. Stops early when either dimension would drop below 16.
inline Pyramid build_pyramid(const GrayFrame& g, int max_levels) {
  Pyramid pyr;
  pyr.levels.push_back(g);
  while (static_cast<int>(pyr.levels.size()) < max_levels) {
    const GrayFrame& prev = pyr.levels.back();
    const int nw = prev.width / 2, nh = prev.height / 2;
    if (nw < 16 || nh < 16) break;
    pyr.levels.push_back(detail::blur_decimate(prev, nw, nh));
  }
  return pyr;
}

// 3x3 Sobel derivatives with replicate borders. The kernel weights sum to 8,
// so values are 8x the unit-spacing derivative.
inline Gradients gradients(const GrayFrame& g) {
  if (g.width < 3 || g.height < 3) throw ImageTooSmall();
  const int w = g.width, h = g.height;
  Gradients out;
  out.width = w;
  out.height = h;
  out.gx.resize(static_cast<std::size_t>(w) * h);
  out.gy.resize(static_cast<std::size_t>(w) * h);

  for (int y = 0; y < h; ++y) {
    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
    const float* rm = g.data.data() + static_cast<std::size_t>(ym) * w;
    const float* rc = g.data.data() + static_cast<std::size_t>(y) * w;
    const float* rp = g.data.data() + static_cast<std::size_t>(yp) * w;
    float* gx = out.gx.data() + static_cast<std::size_t>(y) * w;
    float* gy = out.gy.data() + static_cast<std::size_t>(y) * w;
    auto edge = [&](int x) {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      gx[x] = (rm[xp] + 2.0f * rc[xp] + rp[xp]) - (rm[xm] + 2.0f * rc[xm] + rp[xm]);
      gy[x] = (rp[xm] + 2.0f * rp[x] + rp[xp]) - (rm[xm] + 2.0f * rm[x] + rm[xp]);
    };
    edge(0);
    for (int x = 1; x < w - 1; ++x) {
      gx[x] = (rm[x + 1] + 2.0f * rc[x + 1] + rp[x + 1]) -
              (rm[x - 1] + 2.0f * rc[x - 1] + rp[x - 1]);
      gy[x] = (rp[x - 1] + 2.0f * rp[x] + rp[x + 1]) -
              (rm[x - 1] + 2.0f * rm[x] + rm[x + 1]);
    }
    if (w > 1) edge(w - 1);
  }
  return out;
}

// 3x3 sharpening kernel with -1 everywhere and 9 at the center (sums to 1,
// so constant regions are preserved). Output clamped to [0, 1].
inline GrayFrame sharpen(const GrayFrame& g) {
  if (g.width < 3 || g.height < 3) throw ImageTooSmall();
  const int w = g.width, h = g.height;
  GrayFrame out(w, h);
  for (int y = 0; y < h; ++y) {
    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
    const float* rm = g.data.data() + static_cast<std::size_t>(ym) * w;
    const float* rc = g.data.data() + static_cast<std::size_t>(y) * w;
    const float* rp = g.data.data() + static_cast<std::size_t>(yp) * w;
    float* dst = out.data.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      const float neighborhood = rm[xm] + rm[x] + rm[xp] + rc[xm] + rc[xp] +
                                 rp[xm] + rp[x] + rp[xp];
      dst[x] = std::clamp(9.0f * rc[x] - neighborhood, 0.0f, 1.0f);
    }
  }
  return out;
}

// Bilinear sample with clamped coordinates; x, y in pixel units.
inline float sample_bilinear(const GrayFrame& g, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(g.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(g.height - 1));
  const int x0 = std::min(static_cast<int>(x), g.width - 2 >= 0 ? g.width - 2 : 0);
  const int y0 = std::min(static_cast<int>(y), g.height - 2 >= 0 ? g.height - 2 : 0);
  const double fx = x - x0, fy = y - y0;
  const float v00 = g.at(x0, y0);
  const float v10 = g.at_clamped(x0 + 1, y0);
  const float v01 = g.at_clamped(x0, y0 + 1);
  const float v11 = g.at_clamped(x0 + 1, y0 + 1);
  return static_cast<float>((1 - fx) * ((1 - fy) * v00 + fy * v01) +
                            fx * ((1 - fy) * v10 + fy * v11));
}

}  // namespace trajvis
