#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trajvis/features.hpp"
#include "trajvis/geometry.hpp"
#include "trajvis/metrics.hpp"
#include "trajvis/optflow.hpp"
#include "trajvis/render.hpp"
#include "trajvis/tracker.hpp"
#include "trajvis/types.hpp"

namespace trajvis {

// Flat INI-style key-value file with [section] headers. Repeated keys are
// kept in order (used for lists such as exclusion rects and waypoints).
class IniFile {
 public:
  struct Entry {
    std::string section, key, value;
  };

  static IniFile parse(std::istream& in) {
    IniFile ini;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto comment = line.find_first_of("#;");
      if (comment != std::string::npos) line.erase(comment);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']')
          throw ConfigError("config line " + std::to_string(lineno) +
                            ": unterminated section header");
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": expected key = value");
      Entry e{section, trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1))};
      if (e.key.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      ini.entries_.push_back(std::move(e));
    }
    return ini;
  }

  static IniFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse(in);
  }

  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) const {
    std::optional<std::string> found;
    for (const Entry& e : entries_)
      if (e.section == section && e.key == key) found = e.value;  // last wins
    return found;
  }

  std::vector<std::string> get_all(const std::string& section,
                                   const std::string& key) const {
    std::vector<std::string> out;
    for (const Entry& e : entries_)
      if (e.section == section && e.key == key) out.push_back(e.value);
    return out;
  }

  std::string get_string(const std::string& sec, const std::string& key,
                         const std::string& def) const {
    const auto v = get(sec, key);
    return v ? *v : def;
  }

  double get_double(const std::string& sec, const std::string& key, double def) const {
    const auto v = get(sec, key);
    if (!v) return def;
    try {
      std::size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return d;
    } catch (const std::exception&) {
      throw ConfigError("bad numeric value for [" + sec + "] " + key + ": " + *v);
    }
  }

  int get_int(const std::string& sec, const std::string& key, int def) const {
    const double d = get_double(sec, key, def);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d)
      throw ConfigError("expected integer for [" + sec + "] " + key);
    return i;
  }

  std::uint64_t get_u64(const std::string& sec, const std::string& key,
                        std::uint64_t def) const {
    const auto v = get(sec, key);
    if (!v) return def;
    try {
      std::size_t used = 0;
      const std::uint64_t u = std::stoull(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return u;
    } catch (const std::exception&) {
      throw ConfigError("bad seed value for [" + sec + "] " + key + ": " + *v);
    }
  }

  bool get_bool(const std::string& sec, const std::string& key, bool def) const {
    const auto v = get(sec, key);
    if (!v) return def;
    std::string s = *v;
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw ConfigError("bad boolean value for [" + sec + "] " + key + ": " + *v);
  }

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::vector<Entry> entries_;
};

namespace detail {

// "x,y,w,h" -> BBox
inline BBox parse_rect(const std::string& text, const std::string& what) {
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  BBox b;
  double extra;
  if (!(in >> b.x >> b.y >> b.w >> b.h) || (in >> extra))
    throw ConfigError("expected x,y,w,h for " + what + ": " + text);
  if (!(b.w > 0.0) || !(b.h > 0.0))
    throw ConfigError("non-positive rect size for " + what + ": " + text);
  return b;
}

inline std::array<std::uint8_t, 3> parse_color(const std::string& text) {
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  int r, g, b;
  int extra;
  if (!(in >> r >> g >> b) || (in >> extra) || r < 0 || r > 255 || g < 0 || g > 255 ||
      b < 0 || b > 255)
    throw ConfigError("expected r,g,b in 0..255: " + text);
  return {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
          static_cast<std::uint8_t>(b)};
}

}  // namespace detail

enum class TrackerKind { Mosse, TrackFile };
enum class HomographyOrigin { Estimate, File };

struct PipelineConfig {
  std::string input_dir;
  std::string output_dir;
  double fps = 30.0;
  std::string frame_format = "ppm";  // annotated output frames

  TrackerKind tracker = TrackerKind::Mosse;
  std::string track_file;
  std::optional<BBox> init_box;
  MosseParams mosse;

  double k = 0.9;

  DetectorParams detector;
  FlowParams flow;
  RansacParams ransac;

  bool sharpen = false;
  std::vector<BBox> graphics_rects;

  HomographyOrigin homography = HomographyOrigin::Estimate;
  std::string homography_file;

  bool render_enabled = true;
  RenderStyle style;

  ClippedPairRule clipped_rule = ClippedPairRule::FrameDiagonalPenalty;
};

inline PipelineConfig parse_pipeline_config(const IniFile& ini) {
  PipelineConfig cfg;
  cfg.input_dir = ini.get_string("io", "input", "");
  cfg.output_dir = ini.get_string("io", "output", "");
  cfg.fps = ini.get_double("io", "fps", cfg.fps);
  cfg.frame_format = ini.get_string("io", "format", cfg.frame_format);
  if (cfg.fps <= 0.0) throw ConfigError("[io] fps must be positive");
  if (cfg.frame_format != "ppm" && cfg.frame_format != "png")
    throw ConfigError("[io] format must be ppm or png");

  const std::string tracker = ini.get_string("tracker", "type", "mosse");
  if (tracker == "mosse")
    cfg.tracker = TrackerKind::Mosse;
  else if (tracker == "trackfile")
    cfg.tracker = TrackerKind::TrackFile;
  else
    throw ConfigError("[tracker] type must be mosse or trackfile: " + tracker);
  cfg.track_file = ini.get_string("tracker", "track_file", "");
  if (const auto v = ini.get("tracker", "init_box"))
    cfg.init_box = detail::parse_rect(*v, "[tracker] init_box");
  cfg.mosse.template_size = ini.get_int("tracker", "template_size", cfg.mosse.template_size);
  cfg.mosse.learning_rate = ini.get_double("tracker", "learning_rate", cfg.mosse.learning_rate);
  cfg.mosse.eps = ini.get_double("tracker", "eps", cfg.mosse.eps);
  cfg.mosse.psr_threshold = ini.get_double("tracker", "psr_threshold", cfg.mosse.psr_threshold);
  cfg.mosse.seed = ini.get_u64("tracker", "seed", cfg.mosse.seed);
  if (cfg.tracker == TrackerKind::TrackFile && cfg.track_file.empty())
    throw ConfigError("[tracker] track_file required when type = trackfile");
  if (cfg.tracker == TrackerKind::Mosse && !cfg.init_box)
    throw ConfigError("[tracker] init_box required when type = mosse");

  cfg.k = ini.get_double("trajectory", "k", cfg.k);
  if (cfg.k < 0.0 || cfg.k > 1.0) throw ConfigError("[trajectory] k must be in [0, 1]");

  cfg.detector.max_corners = ini.get_int("features", "max_corners", cfg.detector.max_corners);
  cfg.detector.quality_level =
      ini.get_double("features", "quality_level", cfg.detector.quality_level);
  cfg.detector.min_distance =
      ini.get_double("features", "min_distance", cfg.detector.min_distance);
  cfg.detector.window = ini.get_int("features", "window", cfg.detector.window);

  cfg.flow.window = ini.get_int("flow", "window", cfg.flow.window);
  cfg.flow.pyramid_levels = ini.get_int("flow", "pyramid_levels", cfg.flow.pyramid_levels);
  cfg.flow.max_iters = ini.get_int("flow", "max_iters", cfg.flow.max_iters);
  cfg.flow.eps = ini.get_double("flow", "eps", cfg.flow.eps);
  cfg.flow.fb_thresh = ini.get_double("flow", "fb_thresh", cfg.flow.fb_thresh);
  if (cfg.flow.window < 5 || cfg.flow.window % 2 == 0)
    throw ConfigError("[flow] window must be odd and >= 5");
  if (cfg.flow.max_iters < 1 || cfg.flow.eps <= 0.0 || cfg.flow.pyramid_levels < 1)
    throw ConfigError("[flow] invalid iteration parameters");

  cfg.ransac.max_iters = ini.get_int("ransac", "max_iters", cfg.ransac.max_iters);
  cfg.ransac.inlier_thresh =
      ini.get_double("ransac", "inlier_thresh", cfg.ransac.inlier_thresh);
  cfg.ransac.confidence = ini.get_double("ransac", "confidence", cfg.ransac.confidence);
  cfg.ransac.seed = ini.get_u64("ransac", "seed", cfg.ransac.seed);
  if (cfg.ransac.max_iters < 1 || cfg.ransac.inlier_thresh <= 0.0)
    throw ConfigError("[ransac] invalid parameters");

  cfg.sharpen = ini.get_bool("preproc", "sharpen", cfg.sharpen);

  for (const std::string& r : ini.get_all("graphics", "rect"))
    cfg.graphics_rects.push_back(detail::parse_rect(r, "[graphics] rect"));

  const std::string origin = ini.get_string("homography", "source", "estimate");
  if (origin == "estimate")
    cfg.homography = HomographyOrigin::Estimate;
  else if (origin == "file")
    cfg.homography = HomographyOrigin::File;
  else
    throw ConfigError("[homography] source must be estimate or file: " + origin);
  cfg.homography_file = ini.get_string("homography", "file", "");
  if (cfg.homography == HomographyOrigin::File && cfg.homography_file.empty())
    throw ConfigError("[homography] file required when source = file");

  cfg.render_enabled = ini.get_bool("render", "enabled", cfg.render_enabled);
  if (const auto v = ini.get("render", "line_color"))
    cfg.style.line_color = detail::parse_color(*v);
  cfg.style.line_width = ini.get_double("render", "line_width", cfg.style.line_width);
  cfg.style.point_radius = ini.get_double("render", "point_radius", cfg.style.point_radius);
  cfg.style.draw_box = ini.get_bool("render", "draw_box", cfg.style.draw_box);
  cfg.style.smooth = ini.get_bool("render", "smooth", cfg.style.smooth);
  cfg.style.smooth_window = ini.get_int("render", "smooth_window", cfg.style.smooth_window);
  cfg.style.smooth_order = ini.get_int("render", "smooth_order", cfg.style.smooth_order);
  cfg.style.hide_points_in_box =
      ini.get_bool("render", "hide_points_in_box", cfg.style.hide_points_in_box);
  if (cfg.style.line_width < 1.0 || cfg.style.point_radius < 1.0)
    throw ConfigError("[render] widths must be >= 1");
  if (cfg.style.smooth_window < 1 || cfg.style.smooth_window % 2 == 0 ||
      cfg.style.smooth_order < 0 || cfg.style.smooth_order >= cfg.style.smooth_window)
    throw ConfigError("[render] invalid smoothing parameters");

  const std::string rule = ini.get_string("metrics", "clipped_pair_rule", "penalty");
  if (rule == "penalty")
    cfg.clipped_rule = ClippedPairRule::FrameDiagonalPenalty;
  else if (rule == "skip")
    cfg.clipped_rule = ClippedPairRule::SkipPair;
  else
    throw ConfigError("[metrics] clipped_pair_rule must be penalty or skip: " + rule);

  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  return parse_pipeline_config(IniFile::load(path));
}

}  // namespace trajvis
