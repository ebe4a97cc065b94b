#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "trajvis/config.hpp"
#include "trajvis/features.hpp"
#include "trajvis/geometry.hpp"
#include "trajvis/image.hpp"
#include "trajvis/io.hpp"
#include "trajvis/metrics.hpp"
#include "trajvis/tracker.hpp"
#include "trajvis/trajectory.hpp"
#include "trajvis/types.hpp"

namespace trajvis {

struct InvalidSpec : std::runtime_error {
  explicit InvalidSpec(const std::string& what) : std::runtime_error(what) {}
};

struct TextureSpec {
  int blob_count = 400;
  double blob_scale = 18.0;   // base Gaussian radius, px
  double noise_sigma = 1.0;   // band-limited noise weight relative to blobs
  double contrast = 1.0;      // (0, 1]
};

struct CameraSpec {
  double tx = 0.0, ty = 0.0;  // pan, px/frame
  double rotation = 0.0;      // deg/frame
  double zoom = 1.0;          // magnification factor/frame
  double jitter = 0.0;        // perspective jitter amplitude per frame
};

struct TargetSpec {
  double size = 60.0;         // world-square side, px
  double intensity = 0.9;     // checker foreground intensity
  double speed = 3.0;         // px/frame along the waypoint polyline
  double k = 0.9;             // anchor fraction used for the reference
  std::vector<Point2> waypoints;  // frame-0 pixel coordinates
};

struct SceneSpec {
  int width = 1280;
  int height = 720;
  int frames = 100;
  double fps = 30.0;
  std::uint64_t seed = 1;
  std::string format = "ppm";  // frame encoding: ppm or png
  TextureSpec texture;
  CameraSpec camera;
  TargetSpec target;
};

struct GroundTruth {
  std::vector<Homography> homographies;  // frames - 1 entries, H_t: t-1 -> t
  std::vector<BBox> boxes;               // one per frame
  std::vector<FrameRecord> reference;    // exact trajectory replay
  bool suitable = true;
  int corner_count = 0;
};

inline void validate_spec(const SceneSpec& spec) {
  if (spec.width < 32 || spec.height < 32)
    throw InvalidSpec("frame dimensions must be at least 32 px");
  if (spec.frames < 2) throw InvalidSpec("need at least 2 frames");
  if (!(spec.texture.contrast > 0.0) || spec.texture.contrast > 1.0)
    throw InvalidSpec("contrast must be in (0, 1]");
  if (spec.texture.blob_count < 0 || spec.texture.blob_scale <= 0.0 ||
      spec.texture.noise_sigma < 0.0)
    throw InvalidSpec("bad texture parameters");
  if (!std::isfinite(spec.camera.tx) || !std::isfinite(spec.camera.ty) ||
      !std::isfinite(spec.camera.rotation) || !std::isfinite(spec.camera.zoom) ||
      spec.camera.zoom <= 0.0)
    throw InvalidSpec("bad camera parameters");
  if (spec.camera.jitter < 0.0 || spec.camera.jitter > 5e-5)
    throw InvalidSpec("perspective jitter must be in [0, 5e-5]");
  if (spec.target.size < 8.0 || spec.target.intensity < 0.0 ||
      spec.target.intensity > 1.0 || spec.target.speed < 0.0)
    throw InvalidSpec("bad target parameters");
  if (spec.target.k < 0.0 || spec.target.k > 1.0)
    throw InvalidSpec("anchor fraction k must be in [0, 1]");
  if (spec.format != "ppm" && spec.format != "png")
    throw InvalidSpec("format must be ppm or png");
  for (const Point2& wp : spec.target.waypoints)
    if (!wp.finite()) throw InvalidSpec("non-finite waypoint");
}

// Replays the trajectory recursion over ground-truth boxes and homographies;
// this is the evaluation reference.
inline std::vector<FrameRecord> reference_from_gt(const std::vector<BBox>& boxes,
                                                  const std::vector<Homography>& hs,
                                                  int frame_w, int frame_h,
                                                  double k = 0.9) {
  if (boxes.empty() || hs.size() + 1 != boxes.size()) throw LengthMismatch();
  std::vector<FrameRecord> out;
  out.reserve(boxes.size());
  Trajectory traj(frame_w, frame_h);
  traj.append_current(clamp_into_frame(extract_anchor(boxes[0], k), frame_w, frame_h));
  out.push_back(snapshot(traj));
  for (std::size_t t = 1; t < boxes.size(); ++t) {
    traj.propagate(hs[t - 1]);
    traj.append_current(clamp_into_frame(extract_anchor(boxes[t], k), frame_w, frame_h));
    out.push_back(snapshot(traj));
  }
  return out;
}

namespace detail {

// Mid-gray canvas textured with random-sign Gaussian blobs plus blurred
// white noise, standardized then scaled by the contrast knob.
inline GrayFrame make_canvas(const SceneSpec& spec, Rng& rng) {
  const int w = 3 * spec.width, h = 3 * spec.height;
  std::vector<double> tex(static_cast<std::size_t>(w) * h, 0.0);

  std::vector<double> ex, ey;
  for (int b = 0; b < spec.texture.blob_count; ++b) {
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const double sigma = spec.texture.blob_scale * rng.uniform(0.5, 1.5);
    const double amp =
        rng.uniform(0.5, 1.5) * (rng.next_double() < 0.5 ? -1.0 : 1.0);
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    const int x0 = std::max(static_cast<int>(cx) - r, 0);
    const int x1 = std::min(static_cast<int>(cx) + r, w - 1);
    const int y0 = std::max(static_cast<int>(cy) - r, 0);
    const int y1 = std::min(static_cast<int>(cy) + r, h - 1);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    ex.resize(x1 - x0 + 1);
    ey.resize(y1 - y0 + 1);
    for (int x = x0; x <= x1; ++x) ex[x - x0] = std::exp(-(x - cx) * (x - cx) * inv2s2);
    for (int y = y0; y <= y1; ++y) ey[y - y0] = std::exp(-(y - cy) * (y - cy) * inv2s2);
    for (int y = y0; y <= y1; ++y) {
      const double ay = amp * ey[y - y0];
      double* row = tex.data() + static_cast<std::size_t>(y) * w;
      for (int x = x0; x <= x1; ++x) row[x] += ay * ex[x - x0];
    }
  }

  if (spec.texture.noise_sigma > 0.0) {
    GrayFrame white(w, h);
    for (float& v : white.data) v = static_cast<float>(rng.normal());
    const GrayFrame smooth = binomial_blur5(white);
    // One blur pass leaves the unit white noise with stddev ~0.27; rescale
    // so noise_sigma weights it against the blob field directly.
    const double scale = spec.texture.noise_sigma / 0.27;
    for (std::size_t i = 0; i < tex.size(); ++i) tex[i] += scale * smooth.data[i];
  }

  double mean = 0.0;
  for (const double v : tex) mean += v;
  mean /= static_cast<double>(tex.size());
  double var = 0.0;
  for (const double v : tex) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(tex.size()));
  const double gain = sd > 0.0 ? spec.texture.contrast * 0.18 / sd : 0.0;

  GrayFrame canvas(w, h);
  for (std::size_t i = 0; i < tex.size(); ++i)
    canvas.data[i] =
        std::clamp(static_cast<float>(0.5 + gain * (tex[i] - mean)), 0.0f, 1.0f);
  return canvas;
}

// Similarity transform about (cx, cy): rotate by theta, scale by zoom.
inline Homography similarity_about(double cx, double cy, double theta, double zoom) {
  const double c = std::cos(theta) * zoom, s = std::sin(theta) * zoom;
  return Homography({c, -s, cx - c * cx + s * cy,
                     s, c, cy - s * cx - c * cy,
                     0.0, 0.0, 1.0});
}

// Target world-space center at frame t: walk the waypoint polyline at the
// configured speed, stick to the last waypoint afterwards.
inline Point2 target_center(const SceneSpec& spec, int t, double ox, double oy) {
  std::vector<Point2> wps = spec.target.waypoints;
  if (wps.empty())
    wps.push_back({spec.width / 2.0, spec.height / 2.0});
  double remaining = spec.target.speed * t;
  Point2 pos = wps[0];
  for (std::size_t i = 1; i < wps.size() && remaining > 0.0; ++i) {
    const double seg = distance(wps[i - 1], wps[i]);
    if (seg <= 0.0) continue;
    if (remaining >= seg) {
      pos = wps[i];
      remaining -= seg;
    } else {
      const double f = remaining / seg;
      pos = {wps[i - 1].x + f * (wps[i].x - wps[i - 1].x),
             wps[i - 1].y + f * (wps[i].y - wps[i - 1].y)};
      remaining = 0.0;
    }
  }
  return {pos.x + ox, pos.y + oy};
}

// Renders one frame: sample the canvas through view (frame -> canvas), then
// paint the target square with its 4x4 checker pattern.
inline ColorFrame render_scene_frame(const GrayFrame& canvas, const Homography& view,
                                     int w, int h, const Point2& tc, double tsize,
                                     double tintensity) {
  GrayFrame g(w, h);
  const auto& m = view.coeffs();
  const double half = 0.5 * tsize;
  const double cell = tsize / 4.0;
  for (int y = 0; y < h; ++y) {
    double u = m[1] * y + m[2];
    double v = m[4] * y + m[5];
    double s = m[7] * y + m[8];
    float* row = g.data.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x, u += m[0], v += m[3], s += m[6]) {
      const double qx = u / s, qy = v / s;
      const double lx = qx - tc.x, ly = qy - tc.y;
      if (lx >= -half && lx < half && ly >= -half && ly < half) {
        const int ci = static_cast<int>((lx + half) / cell);
        const int cj = static_cast<int>((ly + half) / cell);
        row[x] = static_cast<float>((ci + cj) % 2 == 0 ? tintensity : 1.0 - tintensity);
      } else {
        row[x] = sample_bilinear(canvas, qx, qy);
      }
    }
  }
  ColorFrame f(w, h);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const auto q = static_cast<std::uint8_t>(
        std::lround(std::clamp(g.data[i], 0.0f, 1.0f) * 255.0f));
    f.data[3 * i] = f.data[3 * i + 1] = f.data[3 * i + 2] = q;
  }
  return f;
}

inline BBox project_target_box(const Homography& world_to_frame, const Point2& tc,
                               double tsize) {
  const double half = 0.5 * tsize;
  const Point2 corners[4] = {{tc.x - half, tc.y - half},
                             {tc.x + half, tc.y - half},
                             {tc.x - half, tc.y + half},
                             {tc.x + half, tc.y + half}};
  double minx = 0, miny = 0, maxx = 0, maxy = 0;
  for (int i = 0; i < 4; ++i) {
    const Point2 p = apply(world_to_frame, corners[i]);
    if (i == 0) {
      minx = maxx = p.x;
      miny = maxy = p.y;
    } else {
      minx = std::min(minx, p.x);
      maxx = std::max(maxx, p.x);
      miny = std::min(miny, p.y);
      maxy = std::max(maxy, p.y);
    }
  }
  return {minx, miny, maxx - minx, maxy - miny};
}

}  // namespace detail

// Generates the scene frame by frame, handing each rendered frame to `sink`.
template <typename FrameSink>
inline GroundTruth generate_scene(const SceneSpec& spec, FrameSink&& sink) {
  validate_spec(spec);
  Rng rng(spec.seed);
  const GrayFrame canvas = detail::make_canvas(spec, rng);
  const double ox = spec.width, oy = spec.height;  // frame 0 sits mid-canvas
  const double cx = spec.width / 2.0, cy = spec.height / 2.0;
  const double theta = spec.camera.rotation * std::numbers::pi / 180.0;

  GroundTruth gt;
  gt.homographies.reserve(spec.frames - 1);
  gt.boxes.reserve(spec.frames);

  // view: frame coords -> canvas coords (inverse of the camera map).
  Homography view = Homography::translation(ox, oy);
  GrayFrame first_gray;
  for (int t = 0; t < spec.frames; ++t) {
    if (t > 0) {
      Homography h = detail::similarity_about(cx, cy, theta, spec.camera.zoom) *
                     Homography::translation(-spec.camera.tx, -spec.camera.ty);
      if (spec.camera.jitter > 0.0) {
        const double jx = rng.uniform(-spec.camera.jitter, spec.camera.jitter);
        const double jy = rng.uniform(-spec.camera.jitter, spec.camera.jitter);
        h = Homography({1, 0, 0, 0, 1, 0, jx, jy, 1}) * h;
      }
      gt.homographies.push_back(h);
      view = view * h.inverse();
    }
    const Point2 tc = detail::target_center(spec, t, ox, oy);
    const ColorFrame frame = detail::render_scene_frame(
        canvas, view, spec.width, spec.height, tc, spec.target.size,
        spec.target.intensity);
    gt.boxes.push_back(detail::project_target_box(view.inverse(), tc, spec.target.size));
    if (t == 0) first_gray = to_gray(frame);
    sink(t, frame);
  }

  gt.reference = reference_from_gt(gt.boxes, gt.homographies, spec.width, spec.height,
                                   spec.target.k);

  // Suitability gate: corner-rich enough for geometry estimation.
  try {
    ExclusionMask mask;
    mask.rects.push_back(gt.boxes[0]);
    gt.corner_count =
        static_cast<int>(detect_corners(first_gray, mask).points.size());
  } catch (const NoFeatures&) {
    gt.corner_count = 0;
  }
  gt.suitable = gt.corner_count >= 800;
  return gt;
}

inline std::pair<std::vector<ColorFrame>, GroundTruth> generate(const SceneSpec& spec) {
  std::vector<ColorFrame> frames;
  frames.reserve(spec.frames);
  GroundTruth gt =
      generate_scene(spec, [&](int, const ColorFrame& f) { frames.push_back(f); });
  return {std::move(frames), std::move(gt)};
}

inline SceneSpec parse_scene_spec(const IniFile& ini) {
  SceneSpec spec;
  spec.width = ini.get_int("scene", "width", spec.width);
  spec.height = ini.get_int("scene", "height", spec.height);
  spec.frames = ini.get_int("scene", "frames", spec.frames);
  spec.fps = ini.get_double("scene", "fps", spec.fps);
  spec.seed = ini.get_u64("scene", "seed", spec.seed);
  spec.format = ini.get_string("scene", "format", spec.format);
  spec.texture.blob_count = ini.get_int("texture", "blob_count", spec.texture.blob_count);
  spec.texture.blob_scale = ini.get_double("texture", "blob_scale", spec.texture.blob_scale);
  spec.texture.noise_sigma =
      ini.get_double("texture", "noise_sigma", spec.texture.noise_sigma);
  spec.texture.contrast = ini.get_double("texture", "contrast", spec.texture.contrast);
  spec.camera.tx = ini.get_double("camera", "tx", spec.camera.tx);
  spec.camera.ty = ini.get_double("camera", "ty", spec.camera.ty);
  spec.camera.rotation = ini.get_double("camera", "rotation", spec.camera.rotation);
  spec.camera.zoom = ini.get_double("camera", "zoom", spec.camera.zoom);
  spec.camera.jitter = ini.get_double("camera", "jitter", spec.camera.jitter);
  spec.target.size = ini.get_double("target", "size", spec.target.size);
  spec.target.intensity = ini.get_double("target", "intensity", spec.target.intensity);
  spec.target.speed = ini.get_double("target", "speed", spec.target.speed);
  spec.target.k = ini.get_double("target", "k", spec.target.k);
  for (const std::string& wp : ini.get_all("target", "waypoint")) {
    std::string t = wp;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream in(t);
    Point2 p;
    double extra;
    if (!(in >> p.x >> p.y) || (in >> extra))
      throw ConfigError("expected x,y for [target] waypoint: " + wp);
    spec.target.waypoints.push_back(p);
  }
  validate_spec(spec);
  return spec;
}

inline SceneSpec load_scene_spec(const std::string& path) {
  return parse_scene_spec(IniFile::load(path));
}

inline void write_scene_spec(std::ostream& out, const SceneSpec& spec,
                             const GroundTruth* analysis = nullptr) {
  char buf[128];
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
    out << buf;
  };
  out << "[scene]\n";
  out << "width = " << spec.width << "\n";
  out << "height = " << spec.height << "\n";
  out << "frames = " << spec.frames << "\n";
  put("fps", spec.fps);
  out << "seed = " << spec.seed << "\n";
  out << "format = " << spec.format << "\n";
  out << "\n[texture]\n";
  out << "blob_count = " << spec.texture.blob_count << "\n";
  put("blob_scale", spec.texture.blob_scale);
  put("noise_sigma", spec.texture.noise_sigma);
  put("contrast", spec.texture.contrast);
  out << "\n[camera]\n";
  put("tx", spec.camera.tx);
  put("ty", spec.camera.ty);
  put("rotation", spec.camera.rotation);
  put("zoom", spec.camera.zoom);
  put("jitter", spec.camera.jitter);
  out << "\n[target]\n";
  put("size", spec.target.size);
  put("intensity", spec.target.intensity);
  put("speed", spec.target.speed);
  put("k", spec.target.k);
  for (const Point2& wp : spec.target.waypoints) {
    std::snprintf(buf, sizeof(buf), "waypoint = %.17g,%.17g\n", wp.x, wp.y);
    out << buf;
  }
  if (analysis) {
    out << "\n[analysis]\n";
    out << "suitable = " << (analysis->suitable ? "true" : "false") << "\n";
    out << "corner_count = " << analysis->corner_count << "\n";
  }
}

// Writes the full scene directory: frames/, gt.homog, gt_boxes.csv,
// reference.traj, and the spec echo with the suitability analysis.
inline GroundTruth write_scene(const SceneSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "frames");
  const GroundTruth gt = generate_scene(spec, [&](int t, const ColorFrame& f) {
    const std::string path =
        (fs::path(out_dir) / "frames" / (detail::frame_basename(t) + "." + spec.format))
            .string();
    write_image(path, f);
  });
  save_homographies((fs::path(out_dir) / "gt.homog").string(), gt.homographies);
  std::map<int, BBox> boxes;
  for (std::size_t t = 0; t < gt.boxes.size(); ++t)
    boxes[static_cast<int>(t)] = gt.boxes[t];
  save_track_file((fs::path(out_dir) / "gt_boxes.csv").string(), boxes);
  save_records((fs::path(out_dir) / "reference.traj").string(), gt.reference,
               spec.width, spec.height);
  std::ofstream spec_out(fs::path(out_dir) / "spec");
  if (!spec_out) throw IoError("cannot write scene spec in " + out_dir);
  write_scene_spec(spec_out, spec, &gt);
  return gt;
}

}  // namespace trajvis
