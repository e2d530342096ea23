#include "c4d/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "c4d/geometry.hpp"

namespace c4d {

namespace {

constexpr double kMinDepth = 1e-4;

double median_of(std::vector<double>* v) {
  if (v->empty())
    throw Error(ErrorCode::InsufficientData, "median of empty set");
  const size_t mid = v->size() / 2;
  std::nth_element(v->begin(), v->begin() + mid, v->end());
  return (*v)[mid];
}

// Focal estimate from a pointmap expressed in its own camera: per-pixel
// ratio of pixel radius to tangent radius, aggregated by median.
double focal_from_pointmap(const Grid<Vec3>& pts, double cx, double cy) {
  std::vector<double> f;
  f.reserve(pts.size());
  for (int y = 0; y < pts.height(); ++y)
    for (int x = 0; x < pts.width(); ++x) {
      const Vec3& p = pts.at(x, y);
      if (!(p.z() > 0.0)) continue;
      const double tan2 = (p.x() * p.x() + p.y() * p.y()) / (p.z() * p.z());
      if (tan2 < 1e-12) continue;
      const double pix2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      f.push_back(std::sqrt(pix2 / tan2));
    }
  if (f.empty())
    throw Error(ErrorCode::DegenerateConfiguration,
                "focal init: no off-axis pixels with positive depth");
  return median_of(&f);
}

struct AdamState {
  std::vector<double> m, v;
  int step = 0;

  explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}

  void update_range(std::vector<double>* params, const std::vector<double>& g,
                    size_t begin, size_t end, const OptimizerConfig& cfg,
                    double lr, double bc1, double bc2) {
    for (size_t i = begin; i < end; ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      (*params)[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
    }
  }
};

const PairPrediction& pair_for_edge(const SceneData& scene, int n, int m) {
  for (const auto& p : scene.pairs)
    if (p.n == n && p.m == m) return p;
  throw Error(ErrorCode::MissingEntry,
              "pair_" + std::to_string(n) + "_" + std::to_string(m));
}

}  // namespace

SceneEstimate init_state(const SceneData& scene, const SceneGraph& graph) {
  const int W = scene.width, H = scene.height, T = scene.num_frames;
  if (T < 2) throw Error(ErrorCode::InvalidInput, "init: need >= 2 frames");

  SceneEstimate state;
  state.init(W, H, T, graph);

  // Reference map of frame t: its own-camera side of edge (t, t+1). The last
  // frame is never a reference and is handled by resection below.
  std::vector<const PairPrediction*> ref(T - 1);
  for (int t = 0; t + 1 < T; ++t) ref[t] = &pair_for_edge(scene, t, t + 1);

  std::vector<Grid<Vec3>> world(T, Grid<Vec3>(W, H, Vec3::Zero()));
  std::vector<double> cum_scale(T, 1.0);

  auto set_depth = [&](int t, const Grid<Vec3>& cam_pts, double scale) {
    double f = focal_from_pointmap(cam_pts, state.cx, state.cy);
    state.focal[t] = f;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double z = cam_pts.at(x, y).z() * scale;
        if (z > 0.0) {
          state.log_depth[t][static_cast<size_t>(y) * W + x] =
              std::log(std::max(z, kMinDepth));
          state.depth_validity[t].at(x, y) = 1;
        } else {
          state.depth_validity[t].at(x, y) = 0;
        }
      }
  };

  for (int t = 0; t + 1 < T; ++t) {
    const Grid<Vec3>& own = ref[t]->pointmap_n.points;
    if (t > 0) {
      // own (cam t) vs the previous pair's view of frame t (cam t-1).
      const Grid<Vec3>& prev_view = ref[t - 1]->pointmap_m.points;
      std::vector<Vec3> src, dst;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          if (own.at(x, y).z() > 0.0 && prev_view.at(x, y).z() > 0.0) {
            src.push_back(own.at(x, y));
            dst.push_back(prev_view.at(x, y));
          }
      if (src.size() < 3)
        throw Error(ErrorCode::InsufficientData,
                    "init: too few shared pixels between frames " +
                        std::to_string(t - 1) + " and " + std::to_string(t));
      const Similarity rel = umeyama_align(src, dst, {}, true);
      const CameraPose& prev = state.poses[t - 1];
      const double cp = cum_scale[t - 1];
      CameraPose p;
      p.rotation = (prev.rotation * Quat(rel.rotation)).normalized();
      p.translation = prev.rotation * (cp * rel.translation) + prev.translation;
      state.poses[t] = p;
      cum_scale[t] = cp * rel.scale;
    }
    set_depth(t, own, cum_scale[t]);
    const Mat3 R = state.poses[t].rotation.toRotationMatrix();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (own.at(x, y).z() > 0.0)
          world[t].at(x, y) =
              R * (cum_scale[t] * own.at(x, y)) + state.poses[t].translation;
  }

  // Final frame: lift its content through the last chained pose, then resect.
  {
    const int t = T - 1;
    const Grid<Vec3>& view = ref[t - 1]->pointmap_m.points;  // cam t-1
    const CameraPose& prev = state.poses[t - 1];
    const Mat3 Rp = prev.rotation.toRotationMatrix();
    std::vector<Vec2> pixels;
    std::vector<Vec3> pts;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (view.at(x, y).z() > 0.0) {
          const Vec3 w =
              Rp * (cum_scale[t - 1] * view.at(x, y)) + prev.translation;
          world[t].at(x, y) = w;
          pixels.emplace_back(x, y);
          pts.push_back(w);
        }
    if (pixels.size() < 6)
      throw Error(ErrorCode::InsufficientData,
                  "init: too few pixels to resect the final frame");
    const Resection res = dlt_resection(pixels, pts);
    state.poses[t] = res.pose;
    state.focal[t] = 0.5 * (res.K.fx + res.K.fy);
    const Mat3 Rt = res.pose.rotation.toRotationMatrix().transpose();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (view.at(x, y).z() > 0.0) {
          const double z =
              (Rt * (world[t].at(x, y) - res.pose.translation)).z();
          state.log_depth[t][static_cast<size_t>(y) * W + x] =
              std::log(std::max(z, kMinDepth));
          state.depth_validity[t].at(x, y) = z > 0.0;
        } else {
          state.depth_validity[t].at(x, y) = 0;
        }
  }

  // Per-edge scale and pose: align each pair's local pointmaps to the world.
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const auto [n, m] = graph.edges[e];
    const PairPrediction& pp = pair_for_edge(scene, n, m);
    std::vector<Vec3> src, dst;
    auto gather = [&](const Grid<Vec3>& local, int frame) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          if (local.at(x, y).z() > 0.0 && state.depth_validity[frame].at(x, y)) {
            src.push_back(local.at(x, y));
            dst.push_back(world[frame].at(x, y));
          }
    };
    gather(pp.pointmap_n.points, n);
    gather(pp.pointmap_m.points, m);
    if (src.size() < 3)
      throw Error(ErrorCode::InsufficientData,
                  "init: too few pixels on edge " + std::to_string(n) + "," +
                      std::to_string(m));
    const Similarity sim = umeyama_align(src, dst, {}, true);
    state.log_sigma[e] = std::log(sim.scale);
    state.edge_pose[e].rotation = Quat(sim.rotation).normalized();
    state.edge_pose[e].translation = sim.translation / sim.scale;
  }

  state.project_gauge();
  return state;
}

void run_stage1(SceneEstimate* state, const ObjectiveData& data,
                const OptimizerConfig& cfg, std::vector<LossReport>* trace) {
  const ParamLayout layout(*state);
  std::vector<double> params;
  AdamState adam(layout.total());
  for (int it = 0; it < cfg.stage1_iters; ++it) {
    LossReport rep = total_loss(*state, data, cfg.stage1_weights, true);
    state_to_params(*state, &params);
    ++adam.step;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, adam.step);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, adam.step);
    adam.update_range(&params, rep.grad, 0, layout.total(), cfg,
                      cfg.stage1_lr, bc1, bc2);
    params_to_state(params, state);
    state->project_gauge();
    if (trace) {
      rep.grad.clear();
      trace->push_back(rep);
    }
  }
}

void run_stage2(SceneEstimate* state, const TrackSet& tracks,
                const OptimizerConfig& cfg, std::vector<LossReport>* trace) {
  if (cfg.stage2_iters <= 0 || tracks.num_tracks == 0) return;
  const ParamLayout layout(*state);
  std::vector<double> params;
  AdamState adam(layout.total());
  PtsCache cache;
  ObjectiveData data;
  LossWeights weights;
  weights.ga = weights.cma = weights.cts = 0.0;
  weights.pts = cfg.stage2_weight_pts;
  for (int it = 0; it < cfg.stage2_iters; ++it) {
    const bool refresh = (it % std::max(cfg.knn_refresh_period, 1)) == 0;
    const std::vector<Grid<Vec3>> targets =
        smoothed_pointmaps(*state, tracks, cfg.smoothing, &cache, refresh);
    data.pts_targets = &targets;
    LossReport rep = total_loss(*state, data, weights, true);
    state_to_params(*state, &params);
    ++adam.step;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, adam.step);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, adam.step);
    // Depth only: poses, intrinsics and edge parameters stay untouched.
    for (int t = 0; t < layout.num_frames; ++t)
      adam.update_range(&params, rep.grad, layout.log_depth_offset(t),
                        layout.log_depth_offset(t) + layout.pixels(), cfg,
                        cfg.stage2_lr, bc1, bc2);
    params_to_state(params, state);
    if (trace) {
      rep.grad.clear();
      trace->push_back(rep);
    }
  }
}

ReconstructionResult reconstruct(const SceneData& scene,
                                 const OptimizerConfig& cfg) {
  const SceneGraph graph =
      build_scene_graph(scene.num_frames, scene.graph_window, scene.graph_stride);
  ReconstructionResult result;
  result.masks = motion_masks_all_frames(graph, scene.flows, scene.tracks,
                                         cfg.mask, cfg.workers);
  result.state = init_state(scene, graph);

  ObjectiveData data;
  data.pairs = &scene.pairs;
  data.flows = &scene.flows;
  data.masks = &result.masks;
  data.graph = &graph;
  run_stage1(&result.state, data, cfg, &result.stage1_trace);
  run_stage2(&result.state, scene.tracks, cfg, &result.stage2_trace);
  return result;
}

SceneOutputs to_outputs(const ReconstructionResult& result,
                        const SceneData& scene) {
  const SceneEstimate& st = result.state;
  SceneOutputs out;
  out.width = st.width;
  out.height = st.height;
  out.num_frames = st.num_frames;
  for (int t = 0; t < st.num_frames; ++t) {
    out.depths.push_back(st.depth_map(t));
    out.poses.push_back(st.poses[t]);
    out.intrinsics.push_back(st.intrinsics(t));
  }
  out.masks = result.masks;
  out.tracks = scene.tracks;

  const std::vector<Grid<Vec3>> maps = world_pointmaps(st);
  std::vector<int> all(scene.tracks.num_tracks);
  for (int i = 0; i < scene.tracks.num_tracks; ++i) all[i] = i;
  std::vector<Grid<uint8_t>> validity;
  for (int t = 0; t < st.num_frames; ++t)
    validity.push_back(st.depth_validity[t]);
  const Trajectory3D lifted = lift_tracks(scene.tracks, all, 0,
                                          scene.tracks.num_frames, maps,
                                          &validity);
  out.tracks3d = lifted.points;
  out.tracks3d_visibility = lifted.visibility;
  return out;
}

}  // namespace c4d
