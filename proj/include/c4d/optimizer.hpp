#pragma once

#include <vector>

#include "c4d/epipolar.hpp"
#include "c4d/objectives.hpp"
#include "c4d/scene_io.hpp"
#include "c4d/trajectory.hpp"
#include "c4d/types.hpp"

namespace c4d {

struct OptimizerConfig {
  LossWeights stage1_weights{1.0, 0.01, 0.01, 0.0};
  int stage1_iters = 300;
  double stage1_lr = 0.01;

  double stage2_weight_pts = 1.0;
  int stage2_iters = 300;
  double stage2_lr = 0.01;
  int knn_refresh_period = 10;  // iterations between stage-2 k-NN rebuilds

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  SmoothingConfig smoothing;
  MaskConfig mask;
  int workers = 1;
};

// Closed-form initialization: per-frame focal from the reference pointmap,
// depth from its z channel, poses chained along consecutive edges with a
// cumulative scale, the final frame resected from world correspondences,
// per-edge scale/pose from an aligned fit. Gauge-projected on return.
SceneEstimate init_state(const SceneData& scene, const SceneGraph& graph);

// Joint refinement of depth, poses, intrinsics and per-edge alignments.
// Appends one per-iteration report (gradients stripped) to trace.
void run_stage1(SceneEstimate* state, const ObjectiveData& data,
                const OptimizerConfig& cfg, std::vector<LossReport>* trace);

// Depth-only smoothing stage: poses, intrinsics and edge parameters are held
// bit-identical; targets are recomputed from the current state every
// iteration with periodic k-NN refresh.
void run_stage2(SceneEstimate* state, const TrackSet& tracks,
                const OptimizerConfig& cfg, std::vector<LossReport>* trace);

struct ReconstructionResult {
  SceneEstimate state;
  std::vector<MotionMask> masks;
  std::vector<LossReport> stage1_trace;
  std::vector<LossReport> stage2_trace;
};

ReconstructionResult reconstruct(const SceneData& scene,
                                 const OptimizerConfig& cfg);

// Package a result for serialization: depth maps, poses, intrinsics, masks,
// input tracks, and the tracks lifted to 3D through the estimated geometry.
SceneOutputs to_outputs(const ReconstructionResult& result,
                        const SceneData& scene);

}  // namespace c4d
