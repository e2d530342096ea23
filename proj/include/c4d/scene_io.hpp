#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "c4d/tensor_io.hpp"
#include "c4d/types.hpp"

namespace c4d {

struct GroundTruth {
  std::vector<DepthMap> depths;
  std::vector<CameraPose> poses;
  std::vector<Intrinsics> intrinsics;
  std::vector<MotionMask> masks;
  TrackSet tracks;
};

// Everything the reconstruction pipeline consumes from disk.
struct SceneData {
  int width = 0;
  int height = 0;
  int num_frames = 0;
  int graph_window = 1;
  int graph_stride = 1;
  std::vector<PairPrediction> pairs;
  std::map<std::pair<int, int>, FlowField> flows;
  TrackSet tracks;
  std::optional<GroundTruth> ground_truth;

  const FlowField& flow(int from, int to) const {
    auto it = flows.find({from, to});
    if (it == flows.end())
      throw Error(ErrorCode::MissingEntry,
                  "flow_" + std::to_string(from) + "_" + std::to_string(to));
    return it->second;
  }
};

// Reconstruction outputs, written alongside a manifest of the same schema.
struct SceneOutputs {
  int width = 0;
  int height = 0;
  int num_frames = 0;
  std::vector<DepthMap> depths;
  std::vector<CameraPose> poses;
  std::vector<Intrinsics> intrinsics;
  std::vector<MotionMask> masks;
  TrackSet tracks;        // 2D passthrough with mobility
  // Lifted 3D trajectories: N x T x 3 plus per-entry visibility.
  std::vector<Vec3> tracks3d;
  std::vector<uint8_t> tracks3d_visibility;
};

SceneData load_scene(const std::string& dir);
void save_scene(const std::string& dir, const SceneData& scene);

SceneOutputs load_outputs(const std::string& dir);
void save_outputs(const std::string& dir, const SceneOutputs& out);

struct PlyOptions {
  bool binary = true;
  bool drop_dynamic = false;   // skip pixels flagged dynamic
  bool flag_dynamic_red = false;  // paint dynamic pixels red
};

void export_ply(const std::vector<Grid<Vec3>>& world_points,
                const std::vector<Grid<uint8_t>>* validity,
                const std::vector<Grid<Vec3>>* colors,
                const std::vector<Grid<uint8_t>>* dynamic_masks,
                const std::string& path, const PlyOptions& options);

// Low-level helpers shared by synthgen and the pipeline writers.
Tensor depth_to_tensor(const DepthMap& d);
DepthMap tensor_to_depth(const Tensor& t);
Tensor pose_to_tensor(const CameraPose& p);
CameraPose tensor_to_pose(const Tensor& t);
Tensor intrinsics_to_tensor(const Intrinsics& k);
Intrinsics tensor_to_intrinsics(const Tensor& t);

}  // namespace c4d
