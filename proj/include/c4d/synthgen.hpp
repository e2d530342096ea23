#pragma once

#include <string>
#include <vector>

#include "c4d/scene_io.hpp"
#include "c4d/types.hpp"

namespace c4d {

enum class CameraPath { Static, Pan, Orbit };
enum class SpherePath { Linear, Sinusoidal };

struct SphereSpec {
  Vec3 center = Vec3(0, 0, 3);
  double radius = 0.4;
  SpherePath path = SpherePath::Linear;
  Vec3 velocity = Vec3::Zero();   // per frame, Linear
  Vec3 amplitude = Vec3::Zero();  // Sinusoidal
  double frequency = 1.0;         // cycles over the clip, Sinusoidal

  Vec3 center_at(int frame, int num_frames) const;
};

struct SynthConfig {
  int width = 64;
  int height = 48;
  int frames = 8;
  CameraPath camera_path = CameraPath::Orbit;
  double magnitude = 0.4;   // pan: world units; orbit: radians swept
  double focal = 0.0;       // 0 = 0.9 * width
  double plane_y = 1.2;     // ground plane (y down)
  double wall_z = 6.0;      // back wall
  std::vector<SphereSpec> spheres;
  double pointmap_sigma = 0.0;   // fraction of depth
  double flow_sigma = 0.0;       // pixels
  double track_sigma = 0.0;      // pixels
  double outlier_fraction = 0.0; // gross flow outliers
  double mobility_threshold = 0.01;
  int graph_window = 4;
  int graph_stride = 2;
  int track_grid = 20;
  uint64_t seed = 0;

  void validate() const {
    if (width < 16 || height < 16)
      throw Error(ErrorCode::InvalidInput, "synth: resolution >= 16 required");
    if (frames < 2) throw Error(ErrorCode::InvalidInput, "synth: T >= 2");
  }
};

SynthConfig synth_preset(const std::string& name);

CameraPose synth_camera_pose(const SynthConfig& cfg, int frame);

// Max-gradient pixel plus one seeded-random pixel per grid cell. Ties break
// to the lowest row-major index.
std::vector<std::pair<int, int>> sample_query_points(
    const Grid<double>& gradient, int grid, uint64_t seed);

// Full scene with ground-truth block; deterministic given cfg.seed.
SceneData generate_scene(const SynthConfig& cfg);

}  // namespace c4d
