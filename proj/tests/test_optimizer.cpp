#include <doctest.h>

#include <cmath>
#include <limits>

#include "c4d/evaluation.hpp"
#include "c4d/optimizer.hpp"
#include "c4d/synthgen.hpp"

using namespace c4d;

namespace {

SceneData small_scene(uint64_t seed = 0) {
  SynthConfig cfg = synth_preset("small");
  cfg.seed = seed;
  return generate_scene(cfg);
}

bool states_equal(const SceneEstimate& a, const SceneEstimate& b) {
  if (a.log_depth != b.log_depth || a.focal != b.focal) return false;
  for (size_t t = 0; t < a.poses.size(); ++t) {
    if (a.poses[t].rotation.coeffs() != b.poses[t].rotation.coeffs())
      return false;
    if (a.poses[t].translation != b.poses[t].translation) return false;
  }
  if (a.log_sigma != b.log_sigma) return false;
  for (size_t e = 0; e < a.edge_pose.size(); ++e) {
    if (a.edge_pose[e].rotation.coeffs() != b.edge_pose[e].rotation.coeffs())
      return false;
    if (a.edge_pose[e].translation != b.edge_pose[e].translation) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("initialization recovers a noiseless scene almost exactly") {
  const SceneData scene = small_scene();
  const SceneGraph graph =
      build_scene_graph(scene.num_frames, scene.graph_window, scene.graph_stride);
  const SceneEstimate st = init_state(scene, graph);
  const GroundTruth& gt = *scene.ground_truth;

  CHECK(ate(st.poses, gt.poses) < 1e-6);

  std::vector<DepthMap> est;
  for (int t = 0; t < scene.num_frames; ++t) est.push_back(st.depth_map(t));
  const DepthMetrics dm = depth_metrics(est, gt.depths, DepthAlignment::Scale);
  CHECK(dm.abs_rel < 1e-6);

  // focal is shared fx = fy in the synthetic intrinsics
  for (int t = 0; t < scene.num_frames; ++t)
    CHECK(st.focal[t] == doctest::Approx(gt.intrinsics[t].fx).epsilon(1e-6));

  // the gauge is projected: per-edge log scales sum to zero
  double sum = 0.0;
  for (double s : st.log_sigma) sum += s;
  CHECK(std::abs(sum) < 1e-10);
}

TEST_CASE("zero-iteration stages leave the state untouched") {
  const SceneData scene = small_scene();
  const SceneGraph graph =
      build_scene_graph(scene.num_frames, scene.graph_window, scene.graph_stride);
  SceneEstimate st = init_state(scene, graph);
  const SceneEstimate before = st;

  OptimizerConfig cfg;
  cfg.stage1_iters = 0;
  cfg.stage2_iters = 0;

  const std::vector<MotionMask> masks = motion_masks_all_frames(
      graph, scene.flows, scene.tracks, cfg.mask, cfg.workers);
  ObjectiveData data;
  data.pairs = &scene.pairs;
  data.flows = &scene.flows;
  data.masks = &masks;
  data.graph = &graph;

  std::vector<LossReport> trace;
  run_stage1(&st, data, cfg, &trace);
  CHECK(trace.empty());
  CHECK(states_equal(st, before));

  run_stage2(&st, scene.tracks, cfg, &trace);
  CHECK(trace.empty());
  CHECK(states_equal(st, before));
}

TEST_CASE("stage two only moves depth") {
  const SceneData scene = small_scene();
  const SceneGraph graph =
      build_scene_graph(scene.num_frames, scene.graph_window, scene.graph_stride);
  SceneEstimate st = init_state(scene, graph);
  // Perturb so there is actually something to smooth.
  for (int t = 0; t < st.num_frames; ++t)
    for (size_t k = 0; k < st.log_depth[t].size(); ++k)
      st.log_depth[t][k] += 0.02 * std::sin(double(k + 7 * t));
  const SceneEstimate before = st;

  OptimizerConfig cfg;
  cfg.stage2_iters = 15;
  cfg.stage2_lr = 0.003;
  std::vector<LossReport> trace;
  run_stage2(&st, scene.tracks, cfg, &trace);
  CHECK(trace.size() == 15);

  bool depth_changed = false;
  for (int t = 0; t < st.num_frames && !depth_changed; ++t)
    depth_changed = st.log_depth[t] != before.log_depth[t];
  CHECK(depth_changed);

  // poses, intrinsics, and edge parameters are bit-identical
  CHECK(st.focal == before.focal);
  CHECK(st.log_sigma == before.log_sigma);
  for (size_t t = 0; t < st.poses.size(); ++t) {
    CHECK(st.poses[t].rotation.coeffs() == before.poses[t].rotation.coeffs());
    CHECK(st.poses[t].translation == before.poses[t].translation);
  }
  for (size_t e = 0; e < st.edge_pose.size(); ++e) {
    CHECK(st.edge_pose[e].rotation.coeffs() ==
          before.edge_pose[e].rotation.coeffs());
    CHECK(st.edge_pose[e].translation == before.edge_pose[e].translation);
  }
}

TEST_CASE("stage one reduces the loss and reports a monotone trace shape") {
  SynthConfig scfg = synth_preset("small");
  scfg.pointmap_sigma = 0.01;
  scfg.flow_sigma = 0.2;
  const SceneData scene = generate_scene(scfg);
  const SceneGraph graph =
      build_scene_graph(scene.num_frames, scene.graph_window, scene.graph_stride);
  SceneEstimate st = init_state(scene, graph);

  OptimizerConfig cfg;
  cfg.stage1_iters = 120;
  cfg.stage1_lr = 0.001;
  const std::vector<MotionMask> masks = motion_masks_all_frames(
      graph, scene.flows, scene.tracks, cfg.mask, cfg.workers);
  ObjectiveData data;
  data.pairs = &scene.pairs;
  data.flows = &scene.flows;
  data.masks = &masks;
  data.graph = &graph;

  std::vector<LossReport> trace;
  run_stage1(&st, data, cfg, &trace);
  REQUIRE(trace.size() == 120);
  CHECK(trace.back().total < trace.front().total);

  // 50-iteration moving average never increases
  const int w = 50;
  double prev = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + w <= trace.size(); ++i) {
    double avg = 0.0;
    for (int k = 0; k < w; ++k) avg += trace[i + k].total;
    avg /= w;
    CHECK(avg <= prev + 1e-12);
    prev = avg;
  }
}

TEST_CASE("full reconstruction is deterministic") {
  SynthConfig scfg = synth_preset("small");
  scfg.pointmap_sigma = 0.01;
  scfg.flow_sigma = 0.2;
  scfg.track_sigma = 0.1;
  scfg.seed = 11;
  const SceneData scene = generate_scene(scfg);

  OptimizerConfig cfg;
  cfg.stage1_iters = 25;
  cfg.stage2_iters = 10;
  const ReconstructionResult a = reconstruct(scene, cfg);
  const ReconstructionResult b = reconstruct(scene, cfg);
  CHECK(states_equal(a.state, b.state));
  REQUIRE(a.masks.size() == b.masks.size());
  for (size_t t = 0; t < a.masks.size(); ++t)
    for (size_t i = 0; i < a.masks[t].dynamic.size(); ++i)
      CHECK(a.masks[t].dynamic[i] == b.masks[t].dynamic[i]);
  REQUIRE(a.stage1_trace.size() == b.stage1_trace.size());
  for (size_t i = 0; i < a.stage1_trace.size(); ++i)
    CHECK(a.stage1_trace[i].total == b.stage1_trace[i].total);
}

TEST_CASE("outputs package the estimated geometry consistently") {
  const SceneData scene = small_scene();
  OptimizerConfig cfg;
  cfg.stage1_iters = 5;
  cfg.stage2_iters = 5;
  const ReconstructionResult res = reconstruct(scene, cfg);
  const SceneOutputs out = to_outputs(res, scene);
  CHECK(out.width == scene.width);
  CHECK(out.height == scene.height);
  CHECK(out.num_frames == scene.num_frames);
  REQUIRE(out.depths.size() == size_t(scene.num_frames));
  REQUIRE(out.poses.size() == size_t(scene.num_frames));
  REQUIRE(out.masks.size() == size_t(scene.num_frames));
  CHECK(out.tracks.num_tracks == scene.tracks.num_tracks);
  CHECK(out.tracks3d.size() ==
        size_t(scene.tracks.num_tracks) * scene.num_frames);
  for (int t = 0; t < scene.num_frames; ++t) {
    CHECK(out.intrinsics[t].fx == res.state.focal[t]);
    CHECK(out.intrinsics[t].fy == res.state.focal[t]);
  }
}
