#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "c4d/evaluation.hpp"
#include "c4d/geometry.hpp"
#include "c4d/optimizer.hpp"
#include "c4d/scene_io.hpp"
#include "c4d/synthgen.hpp"

namespace {

using c4d::Error;
using json = nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(c4d::ErrorCode::IoFailure, "cannot write " + path);
  f << text;
}

json synth_config_json(const c4d::SynthConfig& c) {
  json j;
  j["width"] = c.width;
  j["height"] = c.height;
  j["frames"] = c.frames;
  j["camera_path"] = c.camera_path == c4d::CameraPath::Static ? "static"
                     : c.camera_path == c4d::CameraPath::Pan  ? "pan"
                                                              : "orbit";
  j["magnitude"] = c.magnitude;
  j["focal"] = c.focal;
  j["plane_y"] = c.plane_y;
  j["wall_z"] = c.wall_z;
  j["pointmap_sigma"] = c.pointmap_sigma;
  j["flow_sigma"] = c.flow_sigma;
  j["track_sigma"] = c.track_sigma;
  j["outlier_fraction"] = c.outlier_fraction;
  j["mobility_threshold"] = c.mobility_threshold;
  j["graph_window"] = c.graph_window;
  j["graph_stride"] = c.graph_stride;
  j["track_grid"] = c.track_grid;
  j["seed"] = c.seed;
  json spheres = json::array();
  for (const auto& s : c.spheres) {
    json sj;
    sj["center"] = {s.center.x(), s.center.y(), s.center.z()};
    sj["radius"] = s.radius;
    sj["path"] = s.path == c4d::SpherePath::Linear ? "linear" : "sinusoidal";
    sj["velocity"] = {s.velocity.x(), s.velocity.y(), s.velocity.z()};
    sj["amplitude"] = {s.amplitude.x(), s.amplitude.y(), s.amplitude.z()};
    sj["frequency"] = s.frequency;
    spheres.push_back(sj);
  }
  j["spheres"] = spheres;
  return j;
}

json optimizer_config_json(const c4d::OptimizerConfig& c, uint64_t seed) {
  json j;
  j["stage1"] = {{"w_ga", c.stage1_weights.ga},
                 {"w_cma", c.stage1_weights.cma},
                 {"w_cts", c.stage1_weights.cts},
                 {"iters", c.stage1_iters},
                 {"lr", c.stage1_lr}};
  j["stage2"] = {{"w_pts", c.stage2_weight_pts},
                 {"iters", c.stage2_iters},
                 {"lr", c.stage2_lr},
                 {"knn_refresh_period", c.knn_refresh_period}};
  j["adam"] = {{"beta1", c.adam_beta1},
               {"beta2", c.adam_beta2},
               {"eps", c.adam_eps}};
  j["smoothing"] = {{"kernel_size", c.smoothing.kernel_size},
                    {"decay", c.smoothing.decay},
                    {"window", c.smoothing.window},
                    {"pad", c.smoothing.pad},
                    {"lbd_k", c.smoothing.lbd_k}};
  j["mask"] = {{"theta_abs", c.mask.theta_abs},
               {"kappa", c.mask.kappa},
               {"median_filter", c.mask.median_filter},
               {"lmeds_max_samples", c.mask.lmeds_max_samples}};
  j["seed"] = seed;
  j["workers"] = c.workers;
  return j;
}

int cmd_synth(const std::string& preset, const std::string& out_dir,
              const c4d::SynthConfig& overrides) {
  c4d::SynthConfig cfg = c4d::synth_preset(preset);
  cfg.seed = overrides.seed;
  cfg.pointmap_sigma = overrides.pointmap_sigma;
  cfg.flow_sigma = overrides.flow_sigma;
  cfg.track_sigma = overrides.track_sigma;
  cfg.outlier_fraction = overrides.outlier_fraction;
  const c4d::SceneData scene = c4d::generate_scene(cfg);
  std::filesystem::create_directories(out_dir);
  c4d::save_scene(out_dir, scene);
  write_text(out_dir + "/synth_config.json", synth_config_json(cfg).dump(2) + "\n");
  std::cout << "wrote scene: " << out_dir << " (" << scene.num_frames
            << " frames, " << scene.pairs.size() << " pairs, "
            << scene.tracks.num_tracks << " tracks)\n";
  return 0;
}

std::string trace_text(const std::vector<c4d::LossReport>& trace,
                       const std::string& stage) {
  std::string s;
  for (size_t i = 0; i < trace.size(); ++i) {
    const auto& r = trace[i];
    s += stage + " " + std::to_string(i) + " total=" + fmt(r.total) +
         " ga=" + fmt(r.ga) + " cma=" + fmt(r.cma) + " cts=" + fmt(r.cts) +
         " pts=" + fmt(r.pts) + "\n";
  }
  return s;
}

int cmd_reconstruct(const std::string& in_dir, const std::string& out_dir,
                    const c4d::OptimizerConfig& cfg, uint64_t seed) {
  const c4d::SceneData scene = c4d::load_scene(in_dir);
  const c4d::ReconstructionResult result = c4d::reconstruct(scene, cfg);
  const c4d::SceneOutputs out = c4d::to_outputs(result, scene);
  std::filesystem::create_directories(out_dir);
  c4d::save_outputs(out_dir, out);
  write_text(out_dir + "/loss_trace.txt",
             trace_text(result.stage1_trace, "stage1") +
                 trace_text(result.stage2_trace, "stage2"));
  write_text(out_dir + "/reconstruct_config.json",
             optimizer_config_json(cfg, seed).dump(2) + "\n");
  const double final_loss =
      result.stage1_trace.empty() ? 0.0 : result.stage1_trace.back().total;
  std::cout << "reconstructed " << scene.num_frames
            << " frames; final stage-1 loss " << final_loss << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& scene_dir,
             const std::string& out_file) {
  const c4d::SceneOutputs pred = c4d::load_outputs(pred_dir);
  const c4d::SceneData scene = c4d::load_scene(scene_dir);
  if (!scene.ground_truth)
    throw Error(c4d::ErrorCode::MissingEntry,
                "scene has no ground-truth block");
  const c4d::GroundTruth& gt = *scene.ground_truth;

  c4d::MetricsReport rep;
  rep.pose.ate = c4d::ate(pred.poses, gt.poses);
  auto [rt, rr] = c4d::rpe(pred.poses, gt.poses, 1);
  rep.pose.rpe_trans = rt;
  rep.pose.rpe_rot_deg = rr;
  rep.depth_scale =
      c4d::depth_metrics(pred.depths, gt.depths, c4d::DepthAlignment::Scale);
  rep.depth_scale_shift = c4d::depth_metrics(pred.depths, gt.depths,
                                             c4d::DepthAlignment::ScaleShift);
  double iou = 0.0;
  for (size_t t = 0; t < gt.masks.size(); ++t)
    iou += c4d::mask_iou(pred.masks[t], gt.masks[t]);
  rep.mask_iou = iou / static_cast<double>(gt.masks.size());

  // Track mobility re-labeled from the estimated masks at the track position.
  c4d::TrackSet labeled = pred.tracks;
  for (int i = 0; i < labeled.num_tracks; ++i)
    for (int t = 0; t < labeled.num_frames; ++t) {
      const size_t k = labeled.idx(i, t);
      if (!labeled.visibility[k]) continue;
      const int x = static_cast<int>(std::lround(labeled.positions[k].x()));
      const int y = static_cast<int>(std::lround(labeled.positions[k].y()));
      const auto& m = pred.masks[t].dynamic;
      labeled.mobility[k] =
          m.in_bounds(x, y) ? m.at(x, y) : labeled.mobility[k];
    }
  rep.d_acc = c4d::d_acc(labeled, gt.tracks);
  rep.tap = c4d::tap_metrics(pred.tracks, gt.tracks, scene.width, scene.height);

  json j;
  j["ate"] = rep.pose.ate;
  j["rpe_trans"] = rep.pose.rpe_trans;
  j["rpe_rot_deg"] = rep.pose.rpe_rot_deg;
  j["depth_scale"] = {{"abs_rel", rep.depth_scale.abs_rel},
                      {"rmse", rep.depth_scale.rmse},
                      {"delta_1.25", rep.depth_scale.delta_125}};
  j["depth_scale_shift"] = {{"abs_rel", rep.depth_scale_shift.abs_rel},
                            {"rmse", rep.depth_scale_shift.rmse},
                            {"delta_1.25", rep.depth_scale_shift.delta_125}};
  j["mask_iou"] = rep.mask_iou;
  j["d_acc"] = rep.d_acc;
  j["tap"] = {{"aj", rep.tap.aj},
              {"delta_avg", rep.tap.delta_avg},
              {"oa", rep.tap.oa}};
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out_file.empty()) write_text(out_file, text);
  return 0;
}

int cmd_export(const std::string& in_dir, const std::string& ply_path,
               bool ascii, bool drop_dynamic, bool flag_dynamic) {
  const c4d::SceneOutputs out = c4d::load_outputs(in_dir);
  std::vector<c4d::Grid<c4d::Vec3>> world;
  std::vector<c4d::Grid<uint8_t>> validity;
  std::vector<c4d::Grid<uint8_t>> dynamic;
  for (int t = 0; t < out.num_frames; ++t) {
    const c4d::Pointmap pm =
        c4d::unproject(out.depths[t], out.intrinsics[t], out.poses[t]);
    world.push_back(pm.points);
    validity.push_back(out.depths[t].validity);
    if (t < static_cast<int>(out.masks.size()))
      dynamic.push_back(out.masks[t].dynamic);
  }
  c4d::PlyOptions opt;
  opt.binary = !ascii;
  opt.drop_dynamic = drop_dynamic;
  opt.flag_dynamic_red = flag_dynamic;
  c4d::export_ply(world, &validity, nullptr,
                  dynamic.size() == world.size() ? &dynamic : nullptr,
                  ply_path, opt);
  std::cout << "wrote " << ply_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic-scene reconstruction pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene");
  std::string preset = "small";
  std::string out_dir;
  c4d::SynthConfig sov;
  synth->add_option("--preset", preset, "small|medium");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--seed", sov.seed, "rng seed");
  synth->add_option("--pointmap-sigma", sov.pointmap_sigma,
                    "pointmap noise, fraction of depth");
  synth->add_option("--flow-sigma", sov.flow_sigma, "flow noise, pixels");
  synth->add_option("--track-sigma", sov.track_sigma, "track noise, pixels");
  synth->add_option("--outlier-fraction", sov.outlier_fraction,
                    "gross flow outlier fraction");

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "run the two-stage optimizer");
  std::string in_dir, rec_out;
  c4d::OptimizerConfig ocfg;
  uint64_t seed = 0;
  rec->add_option("--in", in_dir, "scene directory")->required();
  rec->add_option("--out", rec_out, "output directory")->required();
  rec->add_option("--w-ga", ocfg.stage1_weights.ga);
  rec->add_option("--w-cma", ocfg.stage1_weights.cma);
  rec->add_option("--w-cts", ocfg.stage1_weights.cts);
  rec->add_option("--w-pts", ocfg.stage2_weight_pts);
  rec->add_option("--stage1-iters", ocfg.stage1_iters)->check(CLI::PositiveNumber);
  rec->add_option("--stage2-iters", ocfg.stage2_iters)->check(CLI::NonNegativeNumber);
  rec->add_option("--stage1-lr", ocfg.stage1_lr)->check(CLI::PositiveNumber);
  rec->add_option("--stage2-lr", ocfg.stage2_lr)->check(CLI::PositiveNumber);
  rec->add_option("--knn-refresh", ocfg.knn_refresh_period)->check(CLI::PositiveNumber);
  rec->add_option("--theta-abs", ocfg.mask.theta_abs)->check(CLI::NonNegativeNumber);
  rec->add_option("--kappa", ocfg.mask.kappa)->check(CLI::NonNegativeNumber);
  bool no_median = false;
  rec->add_flag("--no-median-filter", no_median);
  rec->add_option("--seed", seed, "rng seed for the robust mask fit");
  rec->add_option("--workers", ocfg.workers, "mask estimation threads");

  // eval
  auto* ev = app.add_subcommand("eval", "score outputs against ground truth");
  std::string pred_dir, gt_scene, eval_out;
  ev->add_option("--pred", pred_dir, "outputs directory")->required();
  ev->add_option("--scene", gt_scene, "scene directory with ground truth")
      ->required();
  ev->add_option("--out", eval_out, "also write the JSON report here");

  // export
  auto* ex = app.add_subcommand("export", "write a PLY point cloud");
  std::string ex_in, ply_path;
  bool ascii = false, drop_dyn = false, flag_dyn = false;
  ex->add_option("--in", ex_in, "outputs directory")->required();
  ex->add_option("--ply", ply_path, "output .ply path")->required();
  ex->add_flag("--ascii", ascii, "ASCII instead of binary");
  ex->add_flag("--drop-dynamic", drop_dyn, "skip dynamic pixels");
  ex->add_flag("--flag-dynamic", flag_dyn, "paint dynamic pixels red");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // flag/validation problems
  }

  try {
    if (synth->parsed()) return cmd_synth(preset, out_dir, sov);
    if (rec->parsed()) {
      ocfg.mask.median_filter = !no_median;
      ocfg.mask.seed = seed;
      return cmd_reconstruct(in_dir, rec_out, ocfg, seed);
    }
    if (ev->parsed()) return cmd_eval(pred_dir, gt_scene, eval_out);
    if (ex->parsed()) return cmd_export(ex_in, ply_path, ascii, drop_dyn, flag_dyn);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;  // runtime/numeric failures
  }
  std::cerr << app.help();
  return 1;
}
