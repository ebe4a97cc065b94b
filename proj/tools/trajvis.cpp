#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "trajvis/config.hpp"
#include "trajvis/io.hpp"
#include "trajvis/pipeline.hpp"
#include "trajvis/render.hpp"
#include "trajvis/synthgen.hpp"
#include "trajvis/types.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& config_path) {
  const trajvis::PipelineConfig cfg = trajvis::load_pipeline_config(config_path);
  const trajvis::RunResult result = trajvis::run_from_config(cfg);

  int fallbacks = 0, low_conf = 0;
  double total_ms = 0.0;
  for (const trajvis::FrameMeta& m : result.meta) {
    if (m.ransac_fallback) ++fallbacks;
    if (m.low_confidence) ++low_conf;
    total_ms += m.total_ms;
  }
  std::printf("processed %zu frames (%dx%d) in %.1f ms\n", result.records.size(),
              result.frame_w, result.frame_h, total_ms);
  std::printf("ransac fallbacks: %d, low-confidence frames: %d\n", fallbacks, low_conf);
  std::printf("outputs in %s\n", cfg.output_dir.c_str());
  return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  const trajvis::SceneSpec spec = trajvis::load_scene_spec(spec_path);
  const trajvis::GroundTruth gt = trajvis::write_scene(spec, out_dir);
  std::printf("wrote %d frames (%dx%d) to %s\n", spec.frames, spec.width, spec.height,
              out_dir.c_str());
  std::printf("corners on frame 0: %d (%s)\n", gt.corner_count,
              gt.suitable ? "suitable" : "unsuitable");
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& ref, const std::string& out,
             const std::string& rule_name) {
  trajvis::ClippedPairRule rule;
  if (rule_name == "penalty")
    rule = trajvis::ClippedPairRule::FrameDiagonalPenalty;
  else if (rule_name == "skip")
    rule = trajvis::ClippedPairRule::SkipPair;
  else
    throw trajvis::ConfigError("unknown clipped-pair rule: " + rule_name);

  const trajvis::EvalReport rep = trajvis::evaluate_dirs(pred, ref, rule);
  {
    std::ofstream f(out);
    if (!f) throw trajvis::IoError("cannot write " + out);
    trajvis::write_report_csv(f, rep);
  }
  const fs::path plot = fs::path(out).parent_path() /
                        (fs::path(out).stem().string() + "_success.csv");
  {
    std::ofstream f(plot);
    if (!f) throw trajvis::IoError("cannot write " + plot.string());
    trajvis::write_success_plot_csv(f, rep);
  }
  std::printf("clips: %zu\n", rep.clips.size());
  std::printf("mppte %.3f px, dtw %.3f px, homography mse %.6g\n", rep.mppte, rep.dtw,
              rep.homography_mse);
  std::printf("auc %.2f, mean %.2f ms/frame (%.1f fps), delta_t %.2f s\n", rep.auc,
              rep.mean_ms, rep.fps, rep.delta_t);
  std::printf("report: %s\n", out.c_str());
  return 0;
}

int cmd_render(const std::string& records_path, const std::string& frames_dir,
               const std::string& out_dir, const std::string& boxes_path) {
  const trajvis::RecordFile rf = trajvis::load_records(records_path);
  std::map<int, trajvis::BBox> boxes;
  trajvis::RenderStyle style;
  if (!boxes_path.empty()) {
    boxes = trajvis::load_track_file(boxes_path);
  } else {
    style.draw_box = false;
    style.hide_points_in_box = false;
  }

  const std::vector<std::string> paths = trajvis::scan_frame_dir(frames_dir);
  fs::create_directories(out_dir);
  const std::size_t n = std::min(paths.size(), rf.records.size());
  for (std::size_t t = 0; t < n; ++t) {
    const trajvis::ColorFrame frame = trajvis::read_image(paths[t]);
    const int w = rf.frame_w > 0 ? rf.frame_w : frame.width;
    const int h = rf.frame_h > 0 ? rf.frame_h : frame.height;
    trajvis::Trajectory traj = trajvis::Trajectory::restore(
        rf.records[t].points, rf.records[t].frame, w, h);
    trajvis::BBox box;
    if (const auto it = boxes.find(static_cast<int>(t)); it != boxes.end())
      box = it->second;
    const trajvis::ColorFrame annotated = trajvis::render_frame(frame, traj, box, style);
    const fs::path out_path =
        fs::path(out_dir) / fs::path(paths[t]).filename();
    trajvis::write_image(out_path.string(), annotated);
  }
  std::printf("rendered %zu frames to %s\n", n, out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skier trajectory overlay pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "run the tracking pipeline over a frame directory");
  run->add_option("--config", config_path, "pipeline config file")->required();

  std::string spec_path, synth_out;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene with ground truth");
  synth->add_option("--spec", spec_path, "scene spec file")->required();
  synth->add_option("--out", synth_out, "output scene directory")->required();

  std::string pred_dir, ref_dir, eval_out, rule_name = "penalty";
  CLI::App* eval = app.add_subcommand("eval", "score a run against reference ground truth");
  eval->add_option("--pred", pred_dir, "prediction directory")->required();
  eval->add_option("--ref", ref_dir, "reference directory")->required();
  eval->add_option("--out", eval_out, "report csv path")->required();
  eval->add_option("--clipped-rule", rule_name, "penalty|skip (default penalty)");

  std::string records_path, frames_dir, render_out, boxes_path;
  CLI::App* render = app.add_subcommand("render", "draw saved records onto frames");
  render->add_option("--records", records_path, "trajectory records file")->required();
  render->add_option("--frames", frames_dir, "input frame directory")->required();
  render->add_option("--out", render_out, "output frame directory")->required();
  render->add_option("--boxes", boxes_path, "optional box track file");

  try {
    app.parse(argc, argv);
    if (run->parsed()) return cmd_run(config_path);
    if (synth->parsed()) return cmd_synth(spec_path, synth_out);
    if (eval->parsed()) return cmd_eval(pred_dir, ref_dir, eval_out, rule_name);
    if (render->parsed()) return cmd_render(records_path, frames_dir, render_out, boxes_path);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const trajvis::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
