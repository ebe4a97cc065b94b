#include "trajvis/pipeline.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "trajvis/synthgen.hpp"

using namespace trajvis;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("trajvis_pipe_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string sub(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

SceneSpec small_scene() {
  SceneSpec spec;
  spec.width = 160;
  spec.height = 120;
  spec.frames = 6;
  spec.seed = 11;
  spec.texture.blob_count = 120;
  spec.texture.blob_scale = 6.0;
  spec.camera.tx = 1.25;
  spec.camera.ty = -0.5;
  spec.camera.rotation = 0.05;
  spec.target.size = 24.0;
  spec.target.speed = 1.0;
  spec.target.waypoints = {{60.0, 60.0}, {120.0, 60.0}};
  return spec;
}

std::map<int, BBox> box_map(const std::vector<BBox>& boxes) {
  std::map<int, BBox> m;
  for (std::size_t t = 0; t < boxes.size(); ++t) m[static_cast<int>(t)] = boxes[t];
  return m;
}

PipelineConfig base_config() {
  PipelineConfig cfg;
  cfg.render_enabled = false;
  return cfg;
}

struct EventLog : RunObserver {
  std::vector<std::string> events;
  void on_frame_opened(int t) override {
    events.push_back("open " + std::to_string(t));
  }
  void on_record_emitted(const FrameRecord& rec) override {
    events.push_back("emit " + std::to_string(rec.frame));
  }
};

}  // namespace

TEST(RunPipeline, RecordEmittedBeforeNextFrameOpened) {
  auto [frames, gt] = generate(small_scene());
  MemoryFrameSource source(std::move(frames));
  TrackFileSource tracker(box_map(gt.boxes));
  EventLog log;
  const RunResult r = run_pipeline(base_config(), source, tracker, &log);
  ASSERT_EQ(r.records.size(), 6u);
  for (int t = 0; t < 6; ++t) {
    const auto open_it =
        std::find(log.events.begin(), log.events.end(), "open " + std::to_string(t));
    const auto emit_it =
        std::find(log.events.begin(), log.events.end(), "emit " + std::to_string(t));
    ASSERT_NE(open_it, log.events.end());
    ASSERT_NE(emit_it, log.events.end());
    EXPECT_LT(open_it, emit_it);
    if (t + 1 < 6) {
      const auto next_open = std::find(log.events.begin(), log.events.end(),
                                       "open " + std::to_string(t + 1));
      EXPECT_LT(emit_it, next_open) << "frame " << t + 1 << " opened too early";
    }
  }
}

TEST(RunPipeline, OracleReplayReproducesReference) {
  TempDir dir;
  const SceneSpec spec = small_scene();
  auto [frames, gt] = generate(spec);

  save_homographies(dir.sub("gt.homog"), gt.homographies);
  PipelineConfig cfg = base_config();
  cfg.homography = HomographyOrigin::File;
  cfg.homography_file = dir.sub("gt.homog");
  cfg.k = spec.target.k;

  MemoryFrameSource source(std::move(frames));
  TrackFileSource tracker(box_map(gt.boxes));
  const RunResult r = run_pipeline(cfg, source, tracker);

  ASSERT_EQ(r.records.size(), gt.reference.size());
  const double err = mppte(r.records, gt.reference, spec.width, spec.height);
  EXPECT_LT(err, 1e-9);
  ASSERT_EQ(r.homographies.size(), gt.homographies.size());
  for (std::size_t i = 0; i < r.homographies.size(); ++i)
    for (int k = 0; k < 9; ++k)
      EXPECT_EQ(r.homographies[i].coeffs()[k], gt.homographies[i].coeffs()[k]);
}

TEST(RunPipeline, EstimatedHomographiesTrackOracle) {
  const SceneSpec spec = small_scene();
  auto [frames, gt] = generate(spec);
  MemoryFrameSource source(std::move(frames));
  TrackFileSource tracker(box_map(gt.boxes));
  const RunResult r = run_pipeline(base_config(), source, tracker);

  // Small textured scene: estimation should engage on every pair and land
  // close to the generating homographies.
  for (const FrameMeta& m : r.meta)
    if (m.frame > 0) {
      EXPECT_FALSE(m.ransac_fallback) << "frame " << m.frame;
      EXPECT_GE(m.inliers, 4) << "frame " << m.frame;
    }
  EXPECT_LT(mean_homography_mse(r.homographies, gt.homographies), 1e-2);
  EXPECT_LT(mppte(r.records, gt.reference, spec.width, spec.height), 3.0);
}

TEST(RunPipeline, ConstantFramesFallBackToIdentity) {
  std::vector<ColorFrame> frames;
  for (int t = 0; t < 4; ++t) {
    ColorFrame f(80, 60);
    std::fill(f.data.begin(), f.data.end(), static_cast<std::uint8_t>(128));
    frames.push_back(std::move(f));
  }
  MemoryFrameSource source(std::move(frames));
  TrackFileSource tracker(box_map(std::vector<BBox>(4, BBox{30, 20, 20, 20})));
  const RunResult r = run_pipeline(base_config(), source, tracker);

  ASSERT_EQ(r.homographies.size(), 3u);
  for (const Homography& h : r.homographies) {
    const auto& m = h.coeffs();
    for (int k = 0; k < 9; ++k)
      EXPECT_DOUBLE_EQ(m[k], (k % 4 == 0) ? 1.0 : 0.0);
  }
  for (const FrameMeta& m : r.meta)
    if (m.frame > 0) {
      EXPECT_EQ(m.corner_count, 0);
      EXPECT_TRUE(m.ransac_fallback);
    }
  EXPECT_EQ(r.records.back().points.size(), 4u);
}

TEST(RunPipeline, UncorrelatedNoiseDoesNotCrash) {
  Rng rng(3);
  std::vector<ColorFrame> frames;
  for (int t = 0; t < 5; ++t) {
    ColorFrame f(64, 48);
    for (auto& b : f.data) b = static_cast<std::uint8_t>(rng.next_below(256));
    frames.push_back(std::move(f));
  }
  MemoryFrameSource source(std::move(frames));
  TrackFileSource tracker(box_map(std::vector<BBox>(5, BBox{20, 15, 16, 16})));
  const RunResult r = run_pipeline(base_config(), source, tracker);
  EXPECT_EQ(r.records.size(), 5u);
  EXPECT_EQ(r.boxes.size(), 5u);
}

TEST(RunPipeline, RejectsEmptySourceAndDimensionChange) {
  PipelineConfig cfg = base_config();
  TrackFileSource tracker(box_map(std::vector<BBox>(3, BBox{4, 4, 8, 8})));
  {
    MemoryFrameSource empty({});
    EXPECT_THROW(run_pipeline(cfg, empty, tracker), IoError);
  }
  {
    std::vector<ColorFrame> frames;
    frames.emplace_back(64, 48);
    frames.emplace_back(64, 40);
    MemoryFrameSource source(std::move(frames));
    EXPECT_THROW(run_pipeline(cfg, source, tracker), IoError);
  }
}

TEST(RunPipeline, ShortOracleFileRejected) {
  TempDir dir;
  save_homographies(dir.sub("short.homog"), {Homography()});
  PipelineConfig cfg = base_config();
  cfg.homography = HomographyOrigin::File;
  cfg.homography_file = dir.sub("short.homog");
  std::vector<ColorFrame> frames(3, ColorFrame(32, 32));
  MemoryFrameSource source(std::move(frames));
  TrackFileSource tracker(box_map(std::vector<BBox>(3, BBox{4, 4, 8, 8})));
  EXPECT_THROW(run_pipeline(cfg, source, tracker), IoError);
}

TEST(MetadataCsv, RoundTrip) {
  TempDir dir;
  std::vector<FrameMeta> meta(2);
  meta[0].frame = 0;
  meta[0].track_ms = 1.5;
  meta[0].total_ms = 1.5;
  meta[0].psr = 12.25;
  meta[1].frame = 1;
  meta[1].corner_count = 321;
  meta[1].valid_matches = 300;
  meta[1].inliers = 290;
  meta[1].ransac_fallback = true;
  meta[1].low_confidence = false;
  meta[1].total_ms = 7.125;
  {
    std::ofstream out(dir.sub("m.csv"));
    write_metadata_csv(out, meta, 25.0);
  }
  const MetadataFile mf = load_metadata_csv(dir.sub("m.csv"));
  EXPECT_DOUBLE_EQ(mf.fps, 25.0);
  ASSERT_EQ(mf.meta.size(), 2u);
  EXPECT_EQ(mf.meta[1].corner_count, 321);
  EXPECT_EQ(mf.meta[1].inliers, 290);
  EXPECT_TRUE(mf.meta[1].ransac_fallback);
  EXPECT_NEAR(mf.meta[1].total_ms, 7.125, 1e-9);
  EXPECT_NEAR(mf.meta[0].psr, 12.25, 1e-9);
}

TEST(RecordsJson, ExactShape) {
  std::vector<FrameRecord> records;
  records.push_back({0, {{0, {1.0, 2.0}}}});
  records.push_back({1, {{0, {1.5, 2.0}}, {1, {3.0, 4.0}}}});
  std::ostringstream out;
  write_records_json(out, records, 320, 240);
  EXPECT_EQ(out.str(),
            "{\"frame_size\":[320,240],\"frames\":["
            "{\"frame\":0,\"points\":[{\"origin\":0,\"x\":1.000,\"y\":2.000}]},"
            "{\"frame\":1,\"points\":[{\"origin\":0,\"x\":1.500,\"y\":2.000},"
            "{\"origin\":1,\"x\":3.000,\"y\":4.000}]}]}\n");
}

namespace {

// Scene directory plus a ready-to-run config replaying its ground truth.
struct SceneFixture {
  TempDir dir;
  SceneSpec spec;
  GroundTruth gt;

  SceneFixture() : spec(small_scene()) { gt = write_scene(spec, dir.sub("ref")); }

  PipelineConfig config(const std::string& out_name) const {
    PipelineConfig cfg;
    cfg.input_dir = (fs::path(dir.sub("ref")) / "frames").string();
    cfg.output_dir = dir.sub(out_name);
    cfg.tracker = TrackerKind::TrackFile;
    cfg.track_file = (fs::path(dir.sub("ref")) / "gt_boxes.csv").string();
    cfg.homography = HomographyOrigin::File;
    cfg.homography_file = (fs::path(dir.sub("ref")) / "gt.homog").string();
    cfg.k = spec.target.k;
    cfg.fps = spec.fps;
    return cfg;
  }
};

}  // namespace

TEST(RunFromConfig, WritesAllArtifacts) {
  SceneFixture fx;
  const PipelineConfig cfg = fx.config("out");
  const RunResult r = run_from_config(cfg);
  EXPECT_EQ(static_cast<int>(r.records.size()), fx.spec.frames);

  const fs::path out(cfg.output_dir);
  for (const char* name :
       {"records.traj", "est.homog", "boxes.csv", "metadata.csv", "records.json"})
    EXPECT_TRUE(fs::exists(out / name)) << name;
  for (int t = 0; t < fx.spec.frames; ++t)
    EXPECT_TRUE(fs::exists(out / "frames" / (detail::frame_basename(t) + ".ppm")));

  // Streamed records match the in-memory result when reloaded.
  const RecordFile rf = load_records((out / "records.traj").string());
  EXPECT_EQ(rf.frame_w, fx.spec.width);
  ASSERT_EQ(rf.records.size(), r.records.size());
  EXPECT_EQ(rf.records.back().points.size(), r.records.back().points.size());
}

TEST(RunFromConfig, RepeatRunsAreByteIdentical) {
  SceneFixture fx;
  PipelineConfig cfg1 = fx.config("out1");
  cfg1.render_enabled = false;
  PipelineConfig cfg2 = fx.config("out2");
  cfg2.render_enabled = false;
  run_from_config(cfg1);
  run_from_config(cfg2);
  for (const char* name : {"records.traj", "est.homog", "boxes.csv", "records.json"}) {
    const std::string a = slurp((fs::path(cfg1.output_dir) / name).string());
    const std::string b = slurp((fs::path(cfg2.output_dir) / name).string());
    EXPECT_FALSE(a.empty()) << name;
    EXPECT_EQ(a, b) << name;
  }
}

TEST(RunFromConfig, MosseTrackerPathRuns) {
  SceneFixture fx;
  PipelineConfig cfg = fx.config("out_mosse");
  cfg.render_enabled = false;
  cfg.tracker = TrackerKind::Mosse;
  cfg.init_box = fx.gt.boxes[0];
  const RunResult r = run_from_config(cfg);
  ASSERT_EQ(static_cast<int>(r.boxes.size()), fx.spec.frames);
  for (const BBox& b : r.boxes) {
    EXPECT_DOUBLE_EQ(b.w, fx.gt.boxes[0].w);
    EXPECT_GE(b.x, 0.0);
  }
}

TEST(Evaluation, OracleRunScoresPerfectly) {
  SceneFixture fx;
  PipelineConfig cfg = fx.config("out");
  cfg.render_enabled = false;
  run_from_config(cfg);

  const ClipScores s = evaluate_clip(cfg.output_dir, fx.dir.sub("ref"), "clip0");
  EXPECT_LT(s.mppte, 1e-9);
  EXPECT_LT(s.dtw, 1e-9);
  EXPECT_LT(s.homography_mse, 1e-24);
  EXPECT_DOUBLE_EQ(s.auc, 100.0);
  // Tiny oracle replays can quantize to 0.000 ms per frame in the CSV.
  EXPECT_GE(s.fps, 0.0);
  EXPECT_GE(s.delta_t, 0.0);

  // Same thing through the directory-level entry point.
  const EvalReport rep = evaluate_dirs(cfg.output_dir, fx.dir.sub("ref"));
  ASSERT_EQ(rep.clips.size(), 1u);
  EXPECT_LT(rep.mppte, 1e-9);
  EXPECT_DOUBLE_EQ(rep.auc, 100.0);
}

TEST(Evaluation, ClipSetMismatchRejected) {
  TempDir dir;
  fs::create_directories(fs::path(dir.sub("pred")) / "a");
  fs::create_directories(fs::path(dir.sub("ref")) / "b");
  EXPECT_THROW(evaluate_dirs(dir.sub("pred"), dir.sub("ref")), IoError);
  EXPECT_THROW(evaluate_dirs(dir.sub("empty"), dir.sub("ref")), std::exception);
}

TEST(Evaluation, ReportCsvShape) {
  EvalReport rep;
  ClipScores c;
  c.clip_id = "clip_a";
  c.mppte = 1.5;
  c.dtw = 20.0;
  c.homography_mse = 0.001;
  c.auc = 87.5;
  c.mean_ms = 40.0;
  c.fps = 25.0;
  c.delta_t = 0.0;
  c.success_curve.fill(1.0);
  rep.clips = {c};
  rep.mppte = c.mppte;
  rep.auc = c.auc;

  std::ostringstream report;
  write_report_csv(report, rep);
  std::istringstream lines(report.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "clip_id,mppte,dtw,mse,auc,ms,fps,delta_t");
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("clip_a,1.5,20,", 0), 0u);
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("mean,", 0), 0u);

  std::ostringstream plot;
  write_success_plot_csv(plot, rep);
  std::istringstream plines(plot.str());
  std::getline(plines, line);
  EXPECT_EQ(line.rfind("clip_id,thr_0.00,thr_0.05", 0), 0u);
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 21);
  std::getline(plines, line);
  EXPECT_EQ(line.rfind("clip_a,1,1,", 0), 0u);
}
