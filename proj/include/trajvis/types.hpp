#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace trajvis {

// 2D point in pixel coordinates.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Axis-aligned bounding box, top-left corner plus size.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w > 0.0 && h > 0.0 ? w * h : 0.0; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }

  bool contains(const Point2& p) const {
    return p.x >= x && p.x < x + w && p.y >= y && p.y < y + h;
  }
};

// Intersection-over-union of two boxes; 0 when either is empty.
inline double iou(const BBox& a, const BBox& b) {
  if (a.area() <= 0.0 || b.area() <= 0.0) return 0.0;
  const double lx = std::max(a.x, b.x);
  const double ly = std::max(a.y, b.y);
  const double rx = std::min(a.x + a.w, b.x + b.w);
  const double ry = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(rx - lx, 0.0) * std::max(ry - ly, 0.0);
  return inter / (a.area() + b.area() - inter);
}

// Matched key-point pair between consecutive frames.
struct Correspondence {
  Point2 src;  // position in the earlier frame
  Point2 dst;  // tracked position in the later frame
  bool valid = false;
};

// Counter-based deterministic PRNG (splitmix64 core). All randomized
// components take an explicit seed so results are reproducible bit-for-bit
// across runs and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Text-format diagnostic carrying the 1-based line number.
struct ParseError : std::runtime_error {
  int line;
  ParseError(int line_, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_) + ": " + what),
        line(line_) {}
};

}  // namespace trajvis
