#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "trajvis/config.hpp"
#include "trajvis/features.hpp"
#include "trajvis/geometry.hpp"
#include "trajvis/image.hpp"
#include "trajvis/io.hpp"
#include "trajvis/metrics.hpp"
#include "trajvis/optflow.hpp"
#include "trajvis/render.hpp"
#include "trajvis/tracker.hpp"
#include "trajvis/trajectory.hpp"
#include "trajvis/types.hpp"

namespace trajvis {

// Sequential frame provider. The pipeline pulls frames strictly in order;
// directory-backed sources open files lazily so the online discipline is
// observable.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual int count() const = 0;
  virtual ColorFrame get(int index) = 0;
};

class DirectoryFrameSource : public FrameSource {
 public:
  explicit DirectoryFrameSource(const std::string& dir) : paths_(scan_frame_dir(dir)) {}

  int count() const override { return static_cast<int>(paths_.size()); }
  ColorFrame get(int index) override { return read_image(paths_.at(index)); }
  const std::vector<std::string>& paths() const { return paths_; }

 private:
  std::vector<std::string> paths_;
};

class MemoryFrameSource : public FrameSource {
 public:
  explicit MemoryFrameSource(std::vector<ColorFrame> frames)
      : frames_(std::move(frames)) {}

  int count() const override { return static_cast<int>(frames_.size()); }
  ColorFrame get(int index) override { return frames_.at(index); }

 private:
  std::vector<ColorFrame> frames_;
};

// Observation points used by tests (online-discipline check) and the CLI
// (per-frame output emission).
struct RunObserver {
  virtual ~RunObserver() = default;
  virtual void on_frame_opened(int) {}
  virtual void on_record_emitted(const FrameRecord&) {}
  virtual void on_frame_done(int, const ColorFrame&, const Trajectory&, const BBox&) {}
};

struct FrameMeta {
  int frame = 0;
  int corner_count = 0;
  int valid_matches = 0;
  int inliers = 0;
  bool ransac_fallback = false;
  double psr = 0.0;
  bool low_confidence = false;
  double track_ms = 0.0;
  double detect_ms = 0.0;
  double flow_ms = 0.0;
  double ransac_ms = 0.0;
  double total_ms = 0.0;  // processing only; excludes disk writes and drawing
};

struct RunResult {
  int frame_w = 0, frame_h = 0;
  std::vector<FrameRecord> records;        // one per frame
  std::vector<Homography> homographies;    // one per frame pair
  std::vector<BBox> boxes;                 // one per frame
  std::vector<FrameMeta> meta;             // one per frame
};

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                   t0)
      .count();
}

}  // namespace detail

// The streaming loop: track the target, estimate (or replay) the inter-frame
// homography from masked corner correspondences, propagate the trajectory,
// append the new anchor. Frame t+1 is not touched until frame t's record is
// out. Soft per-pair failures fall back to the identity homography and are
// flagged in the metadata.
inline RunResult run_pipeline(const PipelineConfig& cfg, FrameSource& source,
                              TrackSource& tracker, RunObserver* observer = nullptr) {
  const int total = source.count();
  if (total < 1) throw IoError("frame source is empty");
  std::vector<Homography> oracle;
  if (cfg.homography == HomographyOrigin::File) {
    oracle = load_homographies(cfg.homography_file);
    if (static_cast<int>(oracle.size()) < total - 1)
      throw IoError("homography file has fewer entries than frame pairs: " +
                    cfg.homography_file);
  }
  const bool estimate = cfg.homography == HomographyOrigin::Estimate;

  RunResult result;
  RunObserver null_observer;
  RunObserver& obs = observer ? *observer : null_observer;

  obs.on_frame_opened(0);
  ColorFrame frame = source.get(0);
  result.frame_w = frame.width;
  result.frame_h = frame.height;

  GrayFrame gray = to_gray(frame);
  auto t0 = std::chrono::steady_clock::now();
  TrackResult tr = tracker.track(0, gray);
  FrameMeta meta;
  meta.frame = 0;
  meta.track_ms = detail::ms_since(t0);
  meta.psr = tr.psr;
  meta.low_confidence = tr.low_confidence;
  meta.total_ms = meta.track_ms;

  Trajectory traj(frame.width, frame.height);
  traj.append_current(
      clamp_into_frame(extract_anchor(tr.box, cfg.k), frame.width, frame.height));

  result.boxes.push_back(tr.box);
  result.records.push_back(snapshot(traj));
  result.meta.push_back(meta);
  obs.on_record_emitted(result.records.back());
  obs.on_frame_done(0, frame, traj, tr.box);

  BBox prev_box = tr.box;
  GrayFrame prev_feat = cfg.sharpen ? sharpen(gray) : gray;
  std::optional<FlowPyramid> prev_pyr;
  if (estimate) {
    try {
      prev_pyr = prepare_flow_pyramid(prev_feat, cfg.flow.pyramid_levels);
    } catch (const ImageTooSmall&) {
    }
  }

  for (int t = 1; t < total; ++t) {
    obs.on_frame_opened(t);
    frame = source.get(t);
    if (frame.width != result.frame_w || frame.height != result.frame_h)
      throw IoError("frame " + std::to_string(t) + " changes dimensions");
    gray = to_gray(frame);

    meta = FrameMeta{};
    meta.frame = t;

    t0 = std::chrono::steady_clock::now();
    tr = tracker.track(t, gray);
    meta.track_ms = detail::ms_since(t0);
    meta.psr = tr.psr;
    meta.low_confidence = tr.low_confidence;

    Homography h;
    GrayFrame feat;
    std::optional<FlowPyramid> pyr;
    if (estimate) {
      feat = cfg.sharpen ? sharpen(gray) : gray;

      // Corners on the previous frame, barred from the previous target box
      // and any static graphics overlays.
      t0 = std::chrono::steady_clock::now();
      ExclusionMask mask;
      mask.rects.push_back(prev_box);
      for (const BBox& r : cfg.graphics_rects) mask.rects.push_back(r);
      std::vector<Point2> corners;
      if (prev_pyr) {
        // The pyramid's level 0 gradients are the Sobel response of
        // prev_feat itself, so detection can share them with the tracker.
        try {
          CornerSet cs =
              detect_corners(prev_feat, mask, cfg.detector, &prev_pyr->grads[0]);
          corners = std::move(cs.points);
        } catch (const NoFeatures&) {
        }
      }
      meta.corner_count = static_cast<int>(corners.size());
      meta.detect_ms = detail::ms_since(t0);

      t0 = std::chrono::steady_clock::now();
      std::vector<Correspondence> matches;
      try {
        pyr = prepare_flow_pyramid(feat, cfg.flow.pyramid_levels);
      } catch (const ImageTooSmall&) {
      }
      if (!corners.empty() && pyr) {
        matches = track_points(*prev_pyr, *pyr, corners, cfg.flow);
        // Matches landing on the target or on graphics move with them, not
        // with the camera; drop them before estimation.
        for (Correspondence& c : matches) {
          if (!c.valid) continue;
          if (tr.box.contains(c.dst)) c.valid = false;
          for (const BBox& r : cfg.graphics_rects)
            if (r.contains(c.dst)) c.valid = false;
        }
      }
      for (const Correspondence& c : matches)
        if (c.valid) ++meta.valid_matches;
      meta.flow_ms = detail::ms_since(t0);

      t0 = std::chrono::steady_clock::now();
      if (meta.valid_matches >= 4) {
        try {
          RansacResult rr = ransac_homography(matches, cfg.ransac);
          h = rr.h;
          meta.inliers = rr.inlier_count;
        } catch (const NoConsensus&) {
          meta.ransac_fallback = true;
        } catch (const DegenerateConfiguration&) {
          meta.ransac_fallback = true;
        }
      } else {
        meta.ransac_fallback = true;
      }
      meta.ransac_ms = detail::ms_since(t0);
    } else {
      h = oracle[t - 1];
    }

    t0 = std::chrono::steady_clock::now();
    traj.propagate(h, frame.width, frame.height);
    traj.append_current(
        clamp_into_frame(extract_anchor(tr.box, cfg.k), frame.width, frame.height));
    const double traj_ms = detail::ms_since(t0);
    meta.total_ms =
        meta.track_ms + meta.detect_ms + meta.flow_ms + meta.ransac_ms + traj_ms;

    result.homographies.push_back(h);
    result.boxes.push_back(tr.box);
    result.records.push_back(snapshot(traj));
    result.meta.push_back(meta);
    obs.on_record_emitted(result.records.back());
    obs.on_frame_done(t, frame, traj, tr.box);

    prev_box = tr.box;
    if (estimate) {
      prev_feat = std::move(feat);
      prev_pyr = std::move(pyr);
    }
  }
  return result;
}

inline void write_metadata_csv(std::ostream& out, const std::vector<FrameMeta>& meta,
                               double fps) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "# fps %.17g\n", fps);
  out << buf;
  out << "frame,corner_count,valid_matches,inliers,ransac_fallback,psr,"
         "track_ms,detect_ms,flow_ms,ransac_ms,total_ms\n";
  for (const FrameMeta& m : meta) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%d,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f\n",
                  m.frame, m.corner_count, m.valid_matches, m.inliers,
                  m.ransac_fallback ? 1 : 0, m.psr, m.track_ms, m.detect_ms, m.flow_ms,
                  m.ransac_ms, m.total_ms);
    out << buf;
  }
}

struct MetadataFile {
  double fps = 30.0;
  std::vector<FrameMeta> meta;
};

inline MetadataFile load_metadata_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  MetadataFile mf;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("# fps", 0) == 0) {
      std::istringstream hdr(line.substr(5));
      if (!(hdr >> mf.fps)) throw ParseError(lineno, "bad fps header");
      continue;
    }
    if (line.empty() || line[0] == '#' || line.rfind("frame,", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    FrameMeta m;
    int fallback = 0;
    if (!(fields >> m.frame >> m.corner_count >> m.valid_matches >> m.inliers >>
          fallback >> m.psr >> m.track_ms >> m.detect_ms >> m.flow_ms >> m.ransac_ms >>
          m.total_ms))
      throw ParseError(lineno, "bad metadata row");
    m.ransac_fallback = fallback != 0;
    mf.meta.push_back(m);
  }
  return mf;
}

namespace detail {

inline std::string json_number(double v) {
  // Fixed three decimals, matching the text record format.
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace detail

inline void write_records_json(std::ostream& out, const std::vector<FrameRecord>& records,
                               int frame_w, int frame_h) {
  out << "{\"frame_size\":[" << frame_w << "," << frame_h << "],\"frames\":[";
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i) out << ",";
    out << "{\"frame\":" << records[i].frame << ",\"points\":[";
    for (std::size_t j = 0; j < records[i].points.size(); ++j) {
      const TrajPoint& tp = records[i].points[j];
      if (j) out << ",";
      out << "{\"origin\":" << tp.origin_frame << ",\"x\":" << detail::json_number(tp.p.x)
          << ",\"y\":" << detail::json_number(tp.p.y) << "}";
    }
    out << "]}";
  }
  out << "]}\n";
}

// Full CLI run: stream the pipeline over a frame directory and write every
// artifact (records, homographies, boxes, metadata, annotated frames).
inline RunResult run_from_config(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.input_dir.empty()) throw ConfigError("[io] input is required");
  if (cfg.output_dir.empty()) throw ConfigError("[io] output is required");
  if (!fs::is_directory(cfg.input_dir))
    throw ConfigError("[io] input is not a directory: " + cfg.input_dir);
  if (cfg.tracker == TrackerKind::TrackFile && !fs::exists(cfg.track_file))
    throw ConfigError("[tracker] track_file does not exist: " + cfg.track_file);
  if (cfg.homography == HomographyOrigin::File && !fs::exists(cfg.homography_file))
    throw ConfigError("[homography] file does not exist: " + cfg.homography_file);

  fs::create_directories(cfg.output_dir);
  if (cfg.render_enabled) fs::create_directories(fs::path(cfg.output_dir) / "frames");

  DirectoryFrameSource source(cfg.input_dir);
  std::unique_ptr<TrackSource> tracker;
  if (cfg.tracker == TrackerKind::Mosse)
    tracker = std::make_unique<MosseTracker>(*cfg.init_box, cfg.mosse);
  else
    tracker = std::make_unique<TrackFileSource>(cfg.track_file);

  // Streaming writer: each frame's record line and annotated frame go out
  // before the next frame is opened.
  struct StreamingWriter : RunObserver {
    const PipelineConfig* cfg = nullptr;
    std::ofstream records_out;
    bool header_written = false;

    void on_record_emitted(const FrameRecord& rec) override {
      std::vector<FrameRecord> one{rec};
      std::ostringstream line;
      write_records(line, one, 0, 0);
      const std::string text = line.str();
      // Drop the per-call frame_size header; it is written once up front.
      records_out << text.substr(text.find('\n') + 1);
      records_out.flush();
    }

    void on_frame_done(int t, const ColorFrame& f, const Trajectory& traj,
                       const BBox& box) override {
      if (!cfg->render_enabled) return;
      const ColorFrame annotated = render_frame(f, traj, box, cfg->style);
      const std::string path = (std::filesystem::path(cfg->output_dir) / "frames" /
                                (detail::frame_basename(t) + "." + cfg->frame_format))
                                   .string();
      write_image(path, annotated);
    }
  } writer;
  writer.cfg = &cfg;

  // Probe the frame size for the records header without consuming state:
  // scan_frame_dir guarantees frame 0 exists.
  {
    const ColorFrame f0 = read_image(source.paths().front());
    writer.records_out.open(fs::path(cfg.output_dir) / "records.traj");
    if (!writer.records_out)
      throw IoError("cannot write records in " + cfg.output_dir);
    writer.records_out << "# frame_size " << f0.width << " " << f0.height << "\n";
  }

  const RunResult result = run_pipeline(cfg, source, *tracker, &writer);
  writer.records_out.close();

  save_homographies((fs::path(cfg.output_dir) / "est.homog").string(),
                    result.homographies);
  std::map<int, BBox> boxes;
  for (std::size_t t = 0; t < result.boxes.size(); ++t)
    boxes[static_cast<int>(t)] = result.boxes[t];
  save_track_file((fs::path(cfg.output_dir) / "boxes.csv").string(), boxes);
  {
    std::ofstream out(fs::path(cfg.output_dir) / "metadata.csv");
    if (!out) throw IoError("cannot write metadata in " + cfg.output_dir);
    write_metadata_csv(out, result.meta, cfg.fps);
  }
  {
    std::ofstream out(fs::path(cfg.output_dir) / "records.json");
    if (!out) throw IoError("cannot write json records in " + cfg.output_dir);
    write_records_json(out, result.records, result.frame_w, result.frame_h);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation: compare a run output directory against a reference scene dir.

inline ClipScores evaluate_clip(const std::string& pred_dir, const std::string& ref_dir,
                                const std::string& clip_id,
                                ClippedPairRule rule = ClippedPairRule::FrameDiagonalPenalty) {
  namespace fs = std::filesystem;
  const RecordFile pred = load_records((fs::path(pred_dir) / "records.traj").string());
  const std::string ref_records_path =
      fs::exists(fs::path(ref_dir) / "reference.traj")
          ? (fs::path(ref_dir) / "reference.traj").string()
          : (fs::path(ref_dir) / "records.traj").string();
  const RecordFile ref = load_records(ref_records_path);
  if (pred.records.size() != ref.records.size())
    throw IoError("frame count mismatch between " + pred_dir + " and " + ref_dir);

  const int w = pred.frame_w > 0 ? pred.frame_w : ref.frame_w;
  const int h = pred.frame_h > 0 ? pred.frame_h : ref.frame_h;

  ClipScores scores;
  scores.clip_id = clip_id;
  scores.mppte = mppte(pred.records, ref.records, w, h, rule);
  scores.dtw = mean_pairwise_dtw(pred.records, ref.records);

  const std::string ref_homog_path = fs::exists(fs::path(ref_dir) / "gt.homog")
                                         ? (fs::path(ref_dir) / "gt.homog").string()
                                         : (fs::path(ref_dir) / "est.homog").string();
  scores.homography_mse =
      mean_homography_mse(load_homographies((fs::path(pred_dir) / "est.homog").string()),
                          load_homographies(ref_homog_path));

  const std::string ref_boxes_path = fs::exists(fs::path(ref_dir) / "gt_boxes.csv")
                                         ? (fs::path(ref_dir) / "gt_boxes.csv").string()
                                         : (fs::path(ref_dir) / "boxes.csv").string();
  const std::map<int, BBox> pred_boxes =
      load_track_file((fs::path(pred_dir) / "boxes.csv").string());
  const std::map<int, BBox> gt_boxes = load_track_file(ref_boxes_path);
  std::vector<BBox> pb, gb;
  for (std::size_t t = 0; t < pred.records.size(); ++t) {
    const auto pit = pred_boxes.find(static_cast<int>(t));
    const auto git = gt_boxes.find(static_cast<int>(t));
    if (pit == pred_boxes.end() || git == gt_boxes.end())
      throw IoError("box list does not cover frame " + std::to_string(t));
    pb.push_back(pit->second);
    gb.push_back(git->second);
  }
  const SuccessResult sr = success_auc(pb, gb);
  scores.auc = sr.auc;
  scores.success_curve = sr.curve;

  const MetadataFile mf =
      load_metadata_csv((fs::path(pred_dir) / "metadata.csv").string());
  std::vector<double> per_frame_ms;
  per_frame_ms.reserve(mf.meta.size());
  for (const FrameMeta& m : mf.meta) per_frame_ms.push_back(m.total_ms);
  if (!per_frame_ms.empty()) {
    const TimingSummary ts =
        timing(per_frame_ms, static_cast<double>(pred.records.size()) / mf.fps);
    scores.mean_ms = ts.mean_ms;
    scores.fps = ts.fps;
    scores.delta_t = ts.delta_t;
  }
  return scores;
}

// Single-clip directories (pred has records.traj directly) or multi-clip
// roots with matching subdirectory names.
inline EvalReport evaluate_dirs(const std::string& pred_root, const std::string& ref_root,
                                ClippedPairRule rule = ClippedPairRule::FrameDiagonalPenalty) {
  namespace fs = std::filesystem;
  if (fs::exists(fs::path(pred_root) / "records.traj"))
    return aggregate_clips({evaluate_clip(pred_root, ref_root, ".", rule)});

  std::vector<std::string> pred_clips, ref_clips;
  for (const auto& e : fs::directory_iterator(pred_root))
    if (e.is_directory()) pred_clips.push_back(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(ref_root))
    if (e.is_directory()) ref_clips.push_back(e.path().filename().string());
  std::sort(pred_clips.begin(), pred_clips.end());
  std::sort(ref_clips.begin(), ref_clips.end());
  if (pred_clips.empty()) throw IoError("no clips found under " + pred_root);
  if (pred_clips != ref_clips)
    throw IoError("clip sets differ between " + pred_root + " and " + ref_root);

  std::vector<ClipScores> all;
  all.reserve(pred_clips.size());
  for (const std::string& clip : pred_clips)
    all.push_back(evaluate_clip((fs::path(pred_root) / clip).string(),
                                (fs::path(ref_root) / clip).string(), clip, rule));
  return aggregate_clips(std::move(all));
}

inline void write_report_csv(std::ostream& out, const EvalReport& rep) {
  out << "clip_id,mppte,dtw,mse,auc,ms,fps,delta_t\n";
  char buf[320];
  auto row = [&](const std::string& id, double mppte_v, double dtw_v, double mse_v,
                 double auc_v, double ms_v, double fps_v, double dt_v) {
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                  id.c_str(), mppte_v, dtw_v, mse_v, auc_v, ms_v, fps_v, dt_v);
    out << buf;
  };
  for (const ClipScores& c : rep.clips)
    row(c.clip_id, c.mppte, c.dtw, c.homography_mse, c.auc, c.mean_ms, c.fps, c.delta_t);
  row("mean", rep.mppte, rep.dtw, rep.homography_mse, rep.auc, rep.mean_ms, rep.fps,
      rep.delta_t);
}

inline void write_success_plot_csv(std::ostream& out, const EvalReport& rep) {
  out << "clip_id";
  char buf[64];
  for (int k = 0; k < 21; ++k) {
    std::snprintf(buf, sizeof(buf), ",thr_%.2f", 0.05 * k);
    out << buf;
  }
  out << "\n";
  auto row = [&](const std::string& id, const std::array<double, 21>& curve) {
    out << id;
    for (const double v : curve) {
      std::snprintf(buf, sizeof(buf), ",%.6g", v);
      out << buf;
    }
    out << "\n";
  };
  for (const ClipScores& c : rep.clips) row(c.clip_id, c.success_curve);
  std::array<double, 21> mean{};
  if (!rep.clips.empty()) {
    for (const ClipScores& c : rep.clips)
      for (int k = 0; k < 21; ++k) mean[k] += c.success_curve[k];
    for (int k = 0; k < 21; ++k) mean[k] /= static_cast<double>(rep.clips.size());
  }
  row("mean", mean);
}

}  // namespace trajvis
