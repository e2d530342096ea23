#pragma once

#include <map>
#include <vector>

#include "c4d/types.hpp"

namespace c4d {

// Flat parameter layout of a SceneEstimate. Per frame: H*W log-depths,
// focal, quaternion (w,x,y,z), translation. Per edge: log sigma,
// quaternion, translation.
struct ParamLayout {
  int width = 0;
  int height = 0;
  int num_frames = 0;
  int num_edges = 0;

  explicit ParamLayout(const SceneEstimate& s)
      : width(s.width), height(s.height), num_frames(s.num_frames),
        num_edges(static_cast<int>(s.edges.size())) {}

  size_t pixels() const { return static_cast<size_t>(width) * height; }
  size_t frame_stride() const { return pixels() + 8; }
  size_t log_depth_offset(int t) const { return t * frame_stride(); }
  size_t focal_offset(int t) const { return t * frame_stride() + pixels(); }
  size_t quat_offset(int t) const { return focal_offset(t) + 1; }
  size_t trans_offset(int t) const { return focal_offset(t) + 5; }
  size_t edge_base() const { return num_frames * frame_stride(); }
  size_t log_sigma_offset(int e) const { return edge_base() + e * 8; }
  size_t edge_quat_offset(int e) const { return log_sigma_offset(e) + 1; }
  size_t edge_trans_offset(int e) const { return log_sigma_offset(e) + 5; }
  size_t total() const { return edge_base() + num_edges * 8; }
};

void state_to_params(const SceneEstimate& state, std::vector<double>* params);
void params_to_state(const std::vector<double>& params, SceneEstimate* state);

struct LossWeights {
  double ga = 1.0;
  double cma = 0.01;
  double cts = 0.01;
  double pts = 0.0;
};

struct LossReport {
  double total = 0.0;
  double ga = 0.0;
  double cma = 0.0;
  double cts = 0.0;
  double pts = 0.0;
  std::vector<double> grad;  // ParamLayout order; weighted accumulation
};

struct ObjectiveData {
  const std::vector<PairPrediction>* pairs = nullptr;
  const std::map<std::pair<int, int>, FlowField>* flows = nullptr;
  const std::vector<MotionMask>* masks = nullptr;
  const SceneGraph* graph = nullptr;
  const std::vector<Grid<Vec3>>* pts_targets = nullptr;  // per frame, world
};

// Re-parameterized world pointmaps of every frame (invalid pixels zero).
std::vector<Grid<Vec3>> world_pointmaps(const SceneEstimate& state);

// Each term returns its unweighted value and accumulates weight * d(term)
// into grad (which must be sized ParamLayout::total(), may be null).
double loss_ga(const SceneEstimate& state,
               const std::vector<PairPrediction>& pairs,
               const SceneGraph& graph, double weight,
               std::vector<double>* grad);

double loss_cma(const SceneEstimate& state,
                const std::map<std::pair<int, int>, FlowField>& flows,
                const std::vector<MotionMask>& masks, const SceneGraph& graph,
                double weight, std::vector<double>* grad);

double loss_cts(const SceneEstimate& state, double weight,
                std::vector<double>* grad);

double loss_pts(const SceneEstimate& state,
                const std::vector<Grid<Vec3>>& targets, double weight,
                std::vector<double>* grad);

// Weighted sum; terms with zero weight are skipped entirely. Quaternion
// gradient blocks are projected onto the tangent space of the unit sphere.
LossReport total_loss(const SceneEstimate& state, const ObjectiveData& data,
                      const LossWeights& weights, bool with_grad);

}  // namespace c4d
