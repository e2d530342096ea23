// Python bindings for the pipeline entry points plus a few numpy-facing
// primitives. Heavy data stays on disk in scene/output directories; the
// bindings shuttle configuration and metrics.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "c4d/epipolar.hpp"
#include "c4d/evaluation.hpp"
#include "c4d/optimizer.hpp"
#include "c4d/scene_io.hpp"
#include "c4d/synthgen.hpp"
#include "c4d/trajectory.hpp"

namespace py = pybind11;
using namespace c4d;

namespace {

void synth(const std::string& preset, const std::string& out_dir,
           uint64_t seed, double pointmap_sigma, double flow_sigma,
           double track_sigma, double outlier_fraction) {
  SynthConfig cfg = synth_preset(preset);
  cfg.seed = seed;
  cfg.pointmap_sigma = pointmap_sigma;
  cfg.flow_sigma = flow_sigma;
  cfg.track_sigma = track_sigma;
  cfg.outlier_fraction = outlier_fraction;
  const SceneData scene = generate_scene(cfg);
  std::filesystem::create_directories(out_dir);
  save_scene(out_dir, scene);
}

py::dict run_reconstruct(const std::string& scene_dir,
                         const std::string& out_dir, int stage1_iters,
                         int stage2_iters, double stage1_lr, double stage2_lr,
                         double w_cma, uint64_t seed, int workers) {
  const SceneData scene = load_scene(scene_dir);
  OptimizerConfig cfg;
  cfg.stage1_iters = stage1_iters;
  cfg.stage2_iters = stage2_iters;
  cfg.stage1_lr = stage1_lr;
  cfg.stage2_lr = stage2_lr;
  cfg.stage1_weights.cma = w_cma;
  cfg.mask.seed = seed;
  cfg.workers = workers;
  const ReconstructionResult result = reconstruct(scene, cfg);
  std::filesystem::create_directories(out_dir);
  save_outputs(out_dir, to_outputs(result, scene));
  py::dict info;
  info["stage1_final_loss"] =
      result.stage1_trace.empty() ? 0.0 : result.stage1_trace.back().total;
  info["stage2_final_loss"] =
      result.stage2_trace.empty() ? 0.0 : result.stage2_trace.back().total;
  info["frames"] = scene.num_frames;
  return info;
}

py::dict evaluate(const std::string& pred_dir, const std::string& scene_dir) {
  const SceneOutputs pred = load_outputs(pred_dir);
  const SceneData scene = load_scene(scene_dir);
  if (!scene.ground_truth)
    throw Error(ErrorCode::MissingEntry, "scene has no ground-truth block");
  const GroundTruth& gt = *scene.ground_truth;

  py::dict out;
  out["ate"] = ate(pred.poses, gt.poses);
  const auto [rt, rr] = rpe(pred.poses, gt.poses, 1);
  out["rpe_trans"] = rt;
  out["rpe_rot_deg"] = rr;
  const DepthMetrics ds =
      depth_metrics(pred.depths, gt.depths, DepthAlignment::Scale);
  out["abs_rel"] = ds.abs_rel;
  out["rmse"] = ds.rmse;
  out["delta_125"] = ds.delta_125;
  double iou = 0.0;
  for (size_t t = 0; t < gt.masks.size(); ++t)
    iou += mask_iou(pred.masks[t], gt.masks[t]);
  out["mask_iou"] = iou / static_cast<double>(gt.masks.size());
  const TapMetrics tap =
      tap_metrics(pred.tracks, gt.tracks, scene.width, scene.height);
  out["tap_aj"] = tap.aj;
  out["tap_delta_avg"] = tap.delta_avg;
  out["tap_oa"] = tap.oa;
  return out;
}

double sampson(py::array_t<double> f, py::array_t<double> x,
               py::array_t<double> xp) {
  const auto fb = f.unchecked<2>();
  const auto xb = x.unchecked<1>();
  const auto xpb = xp.unchecked<1>();
  if (fb.shape(0) != 3 || fb.shape(1) != 3 || xb.shape(0) != 2 ||
      xpb.shape(0) != 2)
    throw Error(ErrorCode::ShapeMismatch, "expected F 3x3, points length 2");
  FundamentalMatrix fm;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) fm.f(i, j) = fb(i, j);
  return sampson_error(fm, Vec2(xb(0), xb(1)), Vec2(xpb(0), xpb(1)));
}

py::array_t<double> smooth(py::array_t<double> points,
                           py::array_t<uint8_t> visibility, int kernel_size,
                           double decay) {
  const auto pb = points.unchecked<3>();  // N x T x 3
  const auto vb = visibility.unchecked<2>();
  if (pb.shape(2) != 3 || vb.shape(0) != pb.shape(0) ||
      vb.shape(1) != pb.shape(1))
    throw Error(ErrorCode::ShapeMismatch,
                "points must be N x T x 3 with matching N x T visibility");
  Trajectory3D traj;
  traj.resize(static_cast<int>(pb.shape(0)), static_cast<int>(pb.shape(1)));
  for (int n = 0; n < traj.num_tracks; ++n)
    for (int t = 0; t < traj.num_frames; ++t) {
      traj.points[traj.idx(n, t)] = Vec3(pb(n, t, 0), pb(n, t, 1), pb(n, t, 2));
      traj.visibility[traj.idx(n, t)] = vb(n, t);
    }
  SmoothingConfig cfg;
  cfg.kernel_size = kernel_size;
  cfg.decay = decay;
  cfg.window = std::max(traj.num_frames, kernel_size);
  const Trajectory3D sm = smooth_trajectories(traj, cfg);
  py::array_t<double> out({pb.shape(0), pb.shape(1), py::ssize_t(3)});
  auto ob = out.mutable_unchecked<3>();
  for (int n = 0; n < traj.num_tracks; ++n)
    for (int t = 0; t < traj.num_frames; ++t)
      for (int k = 0; k < 3; ++k)
        ob(n, t, k) = sm.points[sm.idx(n, t)][k];
  return out;
}

}  // namespace

PYBIND11_MODULE(_c4d, m) {
  m.doc() = "dynamic-scene 4D reconstruction pipeline";

  py::register_exception<Error>(m, "C4DError");

  m.def("synth", &synth, py::arg("preset"), py::arg("out_dir"),
        py::arg("seed") = 0, py::arg("pointmap_sigma") = 0.0,
        py::arg("flow_sigma") = 0.0, py::arg("track_sigma") = 0.0,
        py::arg("outlier_fraction") = 0.0,
        "Generate a synthetic scene directory from a preset.");
  m.def("reconstruct", &run_reconstruct, py::arg("scene_dir"),
        py::arg("out_dir"), py::arg("stage1_iters") = 300,
        py::arg("stage2_iters") = 300, py::arg("stage1_lr") = 0.01,
        py::arg("stage2_lr") = 0.01, py::arg("w_cma") = 0.01,
        py::arg("seed") = 0, py::arg("workers") = 1,
        "Run the two-stage optimizer on a scene directory.");
  m.def("evaluate", &evaluate, py::arg("pred_dir"), py::arg("scene_dir"),
        "Score an output directory against scene ground truth.");
  m.def("sampson_error", &sampson, py::arg("f"), py::arg("x"), py::arg("xp"),
        "Sampson error of a correspondence under F, in squared pixels.");
  m.def("smooth_trajectories", &smooth, py::arg("points"),
        py::arg("visibility"), py::arg("kernel_size") = 5,
        py::arg("decay") = 1.0,
        "Adaptive-weight moving average over N x T x 3 trajectories.");
}
