#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajvis/fft.hpp"
#include "trajvis/image.hpp"
#include "trajvis/types.hpp"

namespace trajvis {

struct BoxOutOfBounds : std::runtime_error {
  BoxOutOfBounds() : std::runtime_error("bounding box invalid or outside the frame") {}
};

struct MissingFrame : std::runtime_error {
  int frame;
  explicit MissingFrame(int frame_)
      : std::runtime_error("no box for frame " + std::to_string(frame_)), frame(frame_) {}
};

struct MosseParams {
  int template_size = 64;       // power of two
  double learning_rate = 0.125; // eta
  double eps = 1e-5;            // denominator regularization
  double psr_threshold = 5.0;   // below this the result is flagged low confidence
  std::uint64_t seed = 1;       // for the training perturbations
};

struct TrackResult {
  BBox box;
  double psr = 0.0;
  bool low_confidence = false;
};

struct TrackerState {
  MosseParams params;
  int frame_w = 0, frame_h = 0;
  BBox box;          // last predicted box
  double psr = 0.0;  // of the last response
  std::vector<std::complex<double>> num, den, ghat;
  std::vector<double> hann;
};

namespace detail {

// Resamples the box region to an n x n patch, bilinear, pixel centers mapped
// to pixel centers.
inline std::vector<double> extract_patch(const GrayFrame& g, const BBox& b, int n) {
  std::vector<double> patch(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    const double v = b.y + (j + 0.5) * b.h / n - 0.5;
    for (int i = 0; i < n; ++i) {
      const double u = b.x + (i + 0.5) * b.w / n - 0.5;
      patch[static_cast<std::size_t>(j) * n + i] = sample_bilinear(g, u, v);
    }
  }
  return patch;
}

// log(1 + v), zero mean, unit variance, cosine window.
inline std::vector<std::complex<double>> preprocess_patch(
    const std::vector<double>& patch, const std::vector<double>& hann, int n) {
  const std::size_t sz = static_cast<std::size_t>(n) * n;
  std::vector<double> v(sz);
  double mean = 0.0;
  for (std::size_t i = 0; i < sz; ++i) {
    v[i] = std::log1p(patch[i]);
    mean += v[i];
  }
  mean /= static_cast<double>(sz);
  double var = 0.0;
  for (std::size_t i = 0; i < sz; ++i) {
    v[i] -= mean;
    var += v[i] * v[i];
  }
  const double inv_std = 1.0 / (std::sqrt(var / static_cast<double>(sz)) + 1e-5);
  std::vector<std::complex<double>> out(sz);
  for (std::size_t i = 0; i < sz; ++i) out[i] = v[i] * inv_std * hann[i];
  return out;
}

// Rotation by theta and uniform scaling about the patch center, replicate
// sampling from the source patch.
inline std::vector<double> warp_patch(const std::vector<double>& src, int n,
                                      double theta, double scale) {
  std::vector<double> out(static_cast<std::size_t>(n) * n);
  const double c = (n - 1) / 2.0;
  const double ct = std::cos(theta) / scale, st = std::sin(theta) / scale;
  auto tap = [&](int x, int y) {
    return src[static_cast<std::size_t>(std::clamp(y, 0, n - 1)) * n +
               std::clamp(x, 0, n - 1)];
  };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double dx = i - c, dy = j - c;
      const double sx = ct * dx + st * dy + c;
      const double sy = -st * dx + ct * dy + c;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      out[static_cast<std::size_t>(j) * n + i] =
          (1 - fx) * ((1 - fy) * tap(x0, y0) + fy * tap(x0, y0 + 1)) +
          fx * ((1 - fy) * tap(x0 + 1, y0) + fy * tap(x0 + 1, y0 + 1));
    }
  }
  return out;
}

// Peak-to-sidelobe ratio; the sidelobe excludes an 11 x 11 neighborhood of
// the peak with circular wrapping (the response itself is circular).
inline double response_psr(const std::vector<double>& r, int n, int px, int py) {
  const double peak = r[static_cast<std::size_t>(py) * n + px];
  double sum = 0.0, sum2 = 0.0;
  int count = 0;
  for (int y = 0; y < n; ++y) {
    const int dy = std::min(std::abs(y - py), n - std::abs(y - py));
    for (int x = 0; x < n; ++x) {
      const int dx = std::min(std::abs(x - px), n - std::abs(x - px));
      if (dx <= 5 && dy <= 5) continue;
      const double v = r[static_cast<std::size_t>(y) * n + x];
      sum += v;
      sum2 += v * v;
      ++count;
    }
  }
  if (count == 0) return 0.0;
  const double mean = sum / count;
  const double sd = std::sqrt(std::max(sum2 / count - mean * mean, 0.0));
  return std::max((peak - mean) / (sd + 1e-12), 0.0);
}

// Correlation response of the current filter against a preprocessed patch.
inline std::vector<double> filter_response(const TrackerState& st,
                                           std::vector<std::complex<double>> zhat) {
  const int n = st.params.template_size;
  const std::size_t sz = static_cast<std::size_t>(n) * n;
  fft_2d(zhat, n, false);
  for (std::size_t i = 0; i < sz; ++i)
    zhat[i] *= st.num[i] / (st.den[i] + st.params.eps);
  fft_2d(zhat, n, true);
  std::vector<double> r(sz);
  for (std::size_t i = 0; i < sz; ++i) r[i] = zhat[i].real();
  return r;
}

}  // namespace detail

inline TrackerState tracker_init(const GrayFrame& g, const BBox& b0,
                                 const MosseParams& params = {}) {
  if (params.template_size < 8 || (params.template_size & (params.template_size - 1)) != 0)
    throw std::invalid_argument("template_size must be a power of two >= 8");
  if (params.learning_rate <= 0.0 || params.learning_rate >= 1.0)
    throw std::invalid_argument("learning_rate must be in (0, 1)");
  if (!(b0.w > 0.0) || !(b0.h > 0.0) || b0.area() < 16.0) throw BoxOutOfBounds();
  if (b0.x < 0.0 || b0.y < 0.0 || b0.x + b0.w > g.width || b0.y + b0.h > g.height)
    throw BoxOutOfBounds();

  TrackerState st;
  st.params = params;
  st.frame_w = g.width;
  st.frame_h = g.height;
  st.box = b0;

  const int n = params.template_size;
  const std::size_t sz = static_cast<std::size_t>(n) * n;
  st.hann.resize(sz);
  for (int j = 0; j < n; ++j) {
    const double wy = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * j / (n - 1)));
    for (int i = 0; i < n; ++i) {
      const double wx = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / (n - 1)));
      st.hann[static_cast<std::size_t>(j) * n + i] = wx * wy;
    }
  }

  // Desired response: Gaussian with sigma = n/16 at the patch center.
  const double sigma = n / 16.0;
  st.ghat.resize(sz);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double dx = i - n / 2.0, dy = j - n / 2.0;
      st.ghat[static_cast<std::size_t>(j) * n + i] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  detail::fft_2d(st.ghat, n, false);

  st.num.assign(sz, {0.0, 0.0});
  st.den.assign(sz, {0.0, 0.0});
  const std::vector<double> raw = detail::extract_patch(g, b0, n);
  Rng rng(params.seed);
  for (int k = 0; k < 8; ++k) {
    const double theta = rng.uniform(-0.1, 0.1);
    const double scale = rng.uniform(0.95, 1.05);
    auto fhat = detail::preprocess_patch(detail::warp_patch(raw, n, theta, scale),
                                         st.hann, n);
    detail::fft_2d(fhat, n, false);
    for (std::size_t i = 0; i < sz; ++i) {
      st.num[i] += st.ghat[i] * std::conj(fhat[i]);
      st.den[i] += fhat[i] * std::conj(fhat[i]);
    }
  }

  // Self-correlation on the training patch, mostly a health indicator.
  const std::vector<double> r =
      detail::filter_response(st, detail::preprocess_patch(raw, st.hann, n));
  const auto peak_it = std::max_element(r.begin(), r.end());
  const int peak = static_cast<int>(peak_it - r.begin());
  st.psr = detail::response_psr(r, n, peak % n, peak / n);
  return st;
}

inline TrackResult tracker_update(TrackerState& st, const GrayFrame& g) {
  const int n = st.params.template_size;
  const std::size_t sz = static_cast<std::size_t>(n) * n;

  const std::vector<double> r = detail::filter_response(
      st, detail::preprocess_patch(detail::extract_patch(g, st.box, n), st.hann, n));
  const auto peak_it = std::max_element(r.begin(), r.end());
  const int peak = static_cast<int>(peak_it - r.begin());
  const int px = peak % n, py = peak / n;

  // Sub-pixel peak with a 1D quadratic per axis; neighbors wrap because the
  // response is circular.
  auto at = [&](int x, int y) {
    return r[static_cast<std::size_t>((y + n) % n) * n + (x + n) % n];
  };
  double ox = 0.0, oy = 0.0;
  {
    const double l = at(px - 1, py), c = at(px, py), rr = at(px + 1, py);
    const double denom = l - 2.0 * c + rr;
    if (denom < 0.0) ox = std::clamp(0.5 * (l - rr) / denom, -0.5, 0.5);
    const double u = at(px, py - 1), d = at(px, py + 1);
    const double denom2 = u - 2.0 * c + d;
    if (denom2 < 0.0) oy = std::clamp(0.5 * (u - d) / denom2, -0.5, 0.5);
  }

  // Displacement relative to the patch center, rescaled to frame units.
  const double dx = px + ox - n / 2.0, dy = py + oy - n / 2.0;
  st.box.x += dx * st.box.w / n;
  st.box.y += dy * st.box.h / n;
  st.box.x = std::clamp(st.box.x, 0.0, std::max(st.frame_w - st.box.w, 0.0));
  st.box.y = std::clamp(st.box.y, 0.0, std::max(st.frame_h - st.box.h, 0.0));

  st.psr = detail::response_psr(r, n, px, py);

  // Learn from the re-centered location.
  auto fhat = detail::preprocess_patch(detail::extract_patch(g, st.box, n), st.hann, n);
  detail::fft_2d(fhat, n, false);
  const double eta = st.params.learning_rate;
  for (std::size_t i = 0; i < sz; ++i) {
    st.num[i] = (1.0 - eta) * st.num[i] + eta * st.ghat[i] * std::conj(fhat[i]);
    st.den[i] = (1.0 - eta) * st.den[i] + eta * fhat[i] * std::conj(fhat[i]);
  }
  return {st.box, st.psr, st.psr < st.params.psr_threshold};
}

// Common per-frame box provider: the live MOSSE tracker and the track-file
// reader are interchangeable behind this contract.
class TrackSource {
 public:
  virtual ~TrackSource() = default;
  // Called once per frame in ascending order, starting at index 0. The frame
  // content is ignored by file-backed sources.
  virtual TrackResult track(int frame_index, const GrayFrame& g) = 0;
};

class MosseTracker : public TrackSource {
 public:
  MosseTracker(const BBox& init_box, const MosseParams& params = {})
      : init_box_(init_box), params_(params) {}

  TrackResult track(int frame_index, const GrayFrame& g) override {
    if (frame_index == 0) {
      state_ = tracker_init(g, init_box_, params_);
      return {state_.box, state_.psr, state_.psr < params_.psr_threshold};
    }
    return tracker_update(state_, g);
  }

  const TrackerState& state() const { return state_; }

 private:
  BBox init_box_;
  MosseParams params_;
  TrackerState state_;
};

inline std::map<int, BBox> parse_track_file(std::istream& in) {
  std::map<int, BBox> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    bool blank = true;
    for (char ch : line)
      if (!std::isspace(static_cast<unsigned char>(ch))) {
        blank = false;
        break;
      }
    if (blank) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    long frame;
    BBox b;
    if (!(fields >> frame >> b.x >> b.y >> b.w >> b.h))
      throw ParseError(lineno, "expected frame_index,x,y,w,h");
    std::string rest;
    if (fields >> rest) throw ParseError(lineno, "trailing fields");
    if (frame < 0) throw ParseError(lineno, "negative frame index");
    if (!(b.w > 0.0) || !(b.h > 0.0)) throw ParseError(lineno, "non-positive box size");
    boxes[static_cast<int>(frame)] = b;
  }
  return boxes;
}

inline std::map<int, BBox> load_track_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open track file: " + path);
  return parse_track_file(in);
}

// %.17g keeps a double -> text -> double round trip exact, which matters for
// ground-truth boxes consumed by replay runs.
inline void write_track_file(std::ostream& out, const std::map<int, BBox>& boxes) {
  char buf[256];
  for (const auto& [frame, b] : boxes) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", frame, b.x, b.y,
                  b.w, b.h);
    out << buf;
  }
}

inline void save_track_file(const std::string& path, const std::map<int, BBox>& boxes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write track file: " + path);
  write_track_file(out, boxes);
}

class TrackFileSource : public TrackSource {
 public:
  explicit TrackFileSource(std::map<int, BBox> boxes) : boxes_(std::move(boxes)) {}
  explicit TrackFileSource(const std::string& path) : boxes_(load_track_file(path)) {}

  TrackResult track(int frame_index, const GrayFrame&) override {
    const auto it = boxes_.find(frame_index);
    if (it == boxes_.end()) throw MissingFrame(frame_index);
    return {it->second, -1.0, false};
  }

  const std::map<int, BBox>& boxes() const { return boxes_; }

 private:
  std::map<int, BBox> boxes_;
};

}  // namespace trajvis
